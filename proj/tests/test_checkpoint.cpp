#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstring>
#include <fstream>

#include "json.hpp"

#include "hgnn/checkpoint.hpp"
#include "hgnn/io.hpp"
#include "test_util.hpp"

using namespace hgnn;

namespace {
const char* kPath = "/tmp/hgnn_test_ckpt.bin";
}

TEST_CASE("checkpoint round trip is bit exact") {
  ParamStore store;
  testutil::add_random(store, "alpha", {3, 4}, 1);
  testutil::add_random(store, "beta", {7}, 2);
  Param& tricky = store.add("tricky", {5});
  tricky.values = {0.0, -0.0, 1e-308, -1.7976931348623157e308, 0.1};

  save_checkpoint(store, kPath);
  ParamStore loaded = load_checkpoint(kPath);
  REQUIRE(loaded.size() == store.size());
  for (size_t i = 0; i < store.size(); ++i) {
    CHECK(loaded.at(i).name == store.at(i).name);
    CHECK(loaded.at(i).shape == store.at(i).shape);
    REQUIRE(loaded.at(i).values.size() == store.at(i).values.size());
    CHECK(std::memcmp(loaded.at(i).values.data(), store.at(i).values.data(),
                      store.at(i).values.size() * sizeof(double)) == 0);
  }

  // a second save of the loaded store reproduces the file byte for byte
  const char* second = "/tmp/hgnn_test_ckpt2.bin";
  save_checkpoint(loaded, second);
  CHECK(read_file(kPath) == read_file(second));
}

TEST_CASE("checkpoint container layout") {
  ParamStore store;
  testutil::add_random(store, "w", {2, 2}, 3);
  testutil::add_random(store, "b", {3}, 4);
  save_checkpoint(store, kPath);

  std::string raw = read_file(kPath);
  REQUIRE(raw.size() > 16);
  CHECK(raw.substr(0, 8) == "HGNNCKPT");
  uint32_t version, json_len;
  std::memcpy(&version, raw.data() + 8, 4);
  std::memcpy(&json_len, raw.data() + 12, 4);
  CHECK(version == 1);

  auto index = nlohmann::ordered_json::parse(raw.substr(16, json_len));
  REQUIRE(index.contains("w"));
  REQUIRE(index.contains("b"));
  CHECK(index["w"]["shape"] == nlohmann::json({2, 2}));
  CHECK(index["w"]["offset"] == 0);
  CHECK(index["b"]["offset"] == 4 * sizeof(double));
  CHECK(raw.size() == 16 + json_len + 7 * sizeof(double));

  // payload starts right after the index and is raw little-endian float64
  double first;
  std::memcpy(&first, raw.data() + 16 + json_len, sizeof(double));
  CHECK(first == store.at("w").values[0]);
}

TEST_CASE("checkpoint rejects garbage") {
  write_file(kPath, "NOTACKPTxxxxxxxxxxxx");
  CHECK_THROWS_AS(load_checkpoint(kPath), DataError);

  ParamStore store;
  testutil::add_random(store, "w", {64}, 5);
  save_checkpoint(store, kPath);
  std::string raw = read_file(kPath);
  write_file(kPath, raw.substr(0, raw.size() - 17));  // truncate payload
  CHECK_THROWS_AS(load_checkpoint(kPath), DataError);

  CHECK_THROWS_AS(load_checkpoint("/tmp/does_not_exist.ckpt"), DataError);
}
