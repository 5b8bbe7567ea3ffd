#include <doctest.h>

#include <cmath>
#include <string>

#include "ren/config.hpp"
#include "ren/errors.hpp"

using namespace ren;

namespace {

std::string value_of(const RunConfig& c, const std::string& key) {
  for (const auto& [k, v] : c.entries())
    if (k == key) return v;
  return "<missing>";
}

std::string what_of(const auto& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("defaults are the reference training setup") {
  const RunConfig c;
  CHECK(value_of(c, "lr0") == "0.005");
  CHECK(value_of(c, "batch") == "128");
  CHECK(value_of(c, "weight_decay") == "0.0005");
  CHECK(value_of(c, "momentum") == "0.9");
  CHECK(value_of(c, "lr_drop_every") == "50000");
  CHECK(value_of(c, "lr_factor") == "10");
  CHECK(value_of(c, "iters") == "200000");
  CHECK(value_of(c, "variant") == "region-ensemble");
  CHECK(value_of(c, "grid_n") == "2");
  CHECK(value_of(c, "fc_dim") == "2048");
  CHECK(value_of(c, "channels") == "16,32,64");
  CHECK(value_of(c, "cube_size") == "150");
  CHECK(value_of(c, "aug_rotate_deg") == "180");
  CHECK(c.echo().find("lr0=0.005\n") != std::string::npos);
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("echo parses back to the same configuration") {
  RunConfig c;
  c.set("variant", "basic-bagging");
  c.set("k", "3");
  c.set("channels", "8,16,32");
  c.set("lr0", "0.0123456789");
  c.set("dropout", "0.25");
  c.set("augment", "false");
  c.set("seed", "18446744073709551615");
  const RunConfig back = RunConfig::parse(c.echo());
  CHECK(back.echo() == c.echo());
  CHECK(back.train.lr0 == c.train.lr0);
  CHECK(back.train.seed == 18446744073709551615ull);
  CHECK_FALSE(back.train.augment);
  CHECK(back.bagging());
  CHECK(back.resolved_model().variant == Variant::Basic);
}

TEST_CASE("unknown keys and bad values are errors") {
  RunConfig c;
  CHECK_THROWS_AS(c.set("learning_rate", "0.1"), InputError);
  CHECK_THROWS_AS(c.set("batch", "many"), InputError);
  CHECK_THROWS_AS(c.set("batch", "12x"), InputError);
  CHECK_THROWS_AS(c.set("augment", "maybe"), InputError);
  CHECK_THROWS_AS(c.set("channels", "8,16"), InputError);
  CHECK_THROWS_AS(c.set("variant", "huge"), InputError);

  const std::string msg = what_of([] { RunConfig::parse("# comment\nbatch=4\nbogus=1\n", "my.cfg"); });
  CHECK(msg.find("my.cfg:3") != std::string::npos);
  CHECK(msg.find("bogus") != std::string::npos);
  CHECK(what_of([] { RunConfig::parse("batch 4\n", "x"); }).find("x:1") != std::string::npos);
}

TEST_CASE("validation") {
  RunConfig c;
  c.set("grid_n", "5");
  CHECK_THROWS_AS(c.validate(), InputError);
  c = {};
  c.set("lr_factor", "1");
  CHECK_THROWS_AS(c.validate(), InputError);
  c = {};
  c.set("seg_near", "800");
  CHECK_THROWS_AS(c.validate(), InputError);
  c = {};
  c.set("variant", "basic-bagging");
  c.set("k", "1");
  CHECK_THROWS_AS(c.validate(), InputError);
}

TEST_CASE("format_number round-trips") {
  for (double v : {0.005, 0.0005, 1e-7, 0.1 + 0.2, 150.0, 12345678.9})
    CHECK(std::stod(format_number(v)) == v);
  CHECK(format_number(0.0005) == "0.0005");
  CHECK(format_number(150.0) == "150");
}
