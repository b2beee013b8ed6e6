#include <doctest.h>

#include "cmdp/interval.hpp"
#include "cmdp/mdp.hpp"

using namespace cmdp;

TEST_CASE("state ids round-trip through their canonical text") {
  for (std::string text : {"g3/c/0/0", "g12/w#4/10/2", "g0/bot/0/0@17", "g5/up/2/1@3@r=-7/2", "g-1/v/-3/9@r=0"}) {
    auto s = StateId::parse(text);
    CHECK(s.str() == text);
    CHECK(StateId::parse(s.str()) == s);
  }
  CHECK_THROWS_AS(StateId::parse("x1/c/0/0"), UnknownState);
  CHECK_THROWS_AS(StateId::parse("g1/c/0"), UnknownState);
}
