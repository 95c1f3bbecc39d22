#include <doctest.h>

#include <sstream>

#include "stfuse/grid_io.hpp"
#include "support.hpp"

using namespace stfuse;

TEST_CASE("grid binary round-trip") {
  auto g = testsupport::blob_grid(5, 7, 3, 0.4, Eigen::Vector2d(0.3, -0.2), 0.8);
  g.set_frame({4, 12.5});
  std::stringstream ss;
  write_grid(ss, g);
  const auto back = read_grid(ss);
  REQUIRE(back.same_shape(g));
  CHECK(back.frame().vehicle == 4);
  CHECK(back.frame().timestamp == 12.5);
  for (int ch = 0; ch < 3; ++ch) CHECK(back.channel(ch) == g.channel(ch));
}

TEST_CASE("corrupt grid streams are rejected") {
  std::stringstream bad("NOPE");
  CHECK_THROWS(read_grid(bad));
  auto g = testsupport::blob_grid(4, 4, 1, 1.0, Eigen::Vector2d(0, 0), 1.0);
  std::stringstream ss;
  write_grid(ss, g);
  std::string s = ss.str();
  s.resize(s.size() - 8);
  std::stringstream cut(s);
  CHECK_THROWS(read_grid(cut));
}

TEST_CASE("ascii_dump has a header and one line per row") {
  const auto g = testsupport::blob_grid(3, 4, 1, 1.0, Eigen::Vector2d(0, 0), 1.0);
  const auto s = ascii_dump(g);
  CHECK(std::count(s.begin(), s.end(), '\n') == 4);
  CHECK(s.rfind("# grid 3x4x1", 0) == 0);
}
