#include <gtest/gtest.h>

#include <chrono>
#include <string>

#include "gpmgc/subprocess.hpp"

namespace {

using gpmgc::ExternalObjective;
using gpmgc::ObjectiveFailure;
using gpmgc::Vector;
using namespace std::chrono_literals;

std::string stub(const std::string& name) {
  return std::string(GPMGC_PYTHON) + " " + GPMGC_STUB_DIR + "/" + name;
}

Vector vec(std::initializer_list<double> v) {
  Vector x(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double e : v) x[i++] = e;
  return x;
}

}  // namespace

TEST(Protocol, RequestFormat) {
  EXPECT_EQ(gpmgc::format_request(vec({1.5, -2.0})), "{\"x\":[1.5,-2.0]}\n");
  const Vector tricky = vec({0.1, 1e-300});
  const auto j = nlohmann::json::parse(gpmgc::format_request(tricky));
  EXPECT_EQ(j["x"][0].get<double>(), 0.1);
  EXPECT_EQ(j["x"][1].get<double>(), 1e-300);
}

TEST(Protocol, ParseResponse) {
  EXPECT_EQ(gpmgc::parse_response("{\"y\": 0.25}"), 0.25);
  EXPECT_EQ(gpmgc::parse_response("{\"y\": -3}"), -3.0);
  for (const std::string bad : {"", "garbage", "[1,2]", "{\"z\":1}", "{\"y\":\"1\"}", "{\"y\":null}"}) {
    try {
      gpmgc::parse_response(bad);
      ADD_FAILURE() << "accepted: " << bad;
    } catch (const ObjectiveFailure& e) {
      EXPECT_EQ(e.payload(), bad);
    }
  }
  try {
    gpmgc::parse_response("{\"error\":\"boom\"}");
    ADD_FAILURE();
  } catch (const ObjectiveFailure& e) {
    EXPECT_NE(std::string(e.what()).find("boom"), std::string::npos);
  }
}

TEST(ExternalObjective, EchoRoundTrip) {
  ExternalObjective f(stub("echo_first.py"), 10s);
  for (double v : {0.0, 0.1, -7.25, 1.0 / 3.0, 123456.789}) EXPECT_EQ(f(vec({v, 2.0})), v);
}

TEST(ExternalObjective, ChildIsLongLived) {
  ExternalObjective f(stub("counter.py"), 10s);
  for (int i = 1; i <= 5; ++i) EXPECT_EQ(f(vec({0.0})), i);
}

TEST(ExternalObjective, MalformedOutputCarriesPayload) {
  ExternalObjective f(stub("malformed.py"), 10s);
  try {
    f(vec({1.0}));
    FAIL() << "expected ObjectiveFailure";
  } catch (const ObjectiveFailure& e) {
    EXPECT_EQ(e.payload(), "not json at all");
  }
}

TEST(ExternalObjective, ErrorObjectKeepsChildAlive) {
  ExternalObjective f(stub("reports_error.py"), 10s);
  EXPECT_THROW(f(vec({-1.0, 0.0})), ObjectiveFailure);
  EXPECT_EQ(f(vec({1.0, 2.0})), 5.0);
}

TEST(ExternalObjective, NonzeroExitIsReported) {
  ExternalObjective f(stub("exits.py"), 10s);
  try {
    f(vec({1.0}));
    FAIL() << "expected ObjectiveFailure";
  } catch (const ObjectiveFailure& e) {
    EXPECT_NE(std::string(e.what()).find("exit status 3"), std::string::npos) << e.what();
  }
  EXPECT_THROW(f(vec({1.0})), ObjectiveFailure);
}

TEST(ExternalObjective, TimeoutKillsChild) {
  const auto start = std::chrono::steady_clock::now();
  {
    ExternalObjective f(stub("slow.py"), 300ms);
    try {
      f(vec({1.0}));
      FAIL() << "expected ObjectiveFailure";
    } catch (const ObjectiveFailure& e) {
      EXPECT_NE(std::string(e.what()).find("timed out"), std::string::npos) << e.what();
    }
  }
  EXPECT_LT(std::chrono::steady_clock::now() - start, 5s);
}

TEST(ExternalObjective, MissingCommandFails) {
  ExternalObjective f("/nonexistent/objective-binary", 5s);
  EXPECT_THROW(f(vec({1.0})), ObjectiveFailure);
}
