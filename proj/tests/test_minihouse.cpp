#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "trace/minihouse.hpp"
#include "trace/rng.hpp"

using namespace trace;
using namespace trace::minihouse;

namespace {

TaskSpec make_task(int template_id, const std::string& object,
                   const std::string& receptacle) {
  TaskSpec task;
  task.task_id = "test_task";
  task.template_id = template_id;
  task.target_object = object;
  task.target_receptacle = receptacle;
  task.goal_text = "Put the " + object + " in the " + receptacle + ".";
  return task;
}

}  // namespace

TEST_CASE("templates match the documented layouts") {
  const auto& t0 = house_template(0);
  CHECK(t0.rooms == std::vector<std::string>{"kitchen", "living_room",
                                             "bedroom"});
  CHECK(t0.object_start.size() == 5);
  CHECK(t0.start_of("apple") == "fridge");
  CHECK(t0.room_of("drawer") == "bedroom");
  CHECK(t0.adjacent_rooms("kitchen") == std::vector<std::string>{"living_room"});
  CHECK(t0.adjacent_rooms("living_room") ==
        std::vector<std::string>{"bedroom", "kitchen"});

  const auto& t1 = house_template(1);
  CHECK(t1.rooms == std::vector<std::string>{"kitchen", "hallway", "office",
                                             "bathroom"});
  CHECK(t1.object_start.size() == 7);
  // Hub adjacency: everything reaches everything through the hallway.
  CHECK(t1.adjacent_rooms("hallway") ==
        std::vector<std::string>{"bathroom", "kitchen", "office"});
  CHECK(t1.adjacent_rooms("office") == std::vector<std::string>{"hallway"});

  // Every object's start receptacle exists in exactly one room.
  for (int id : {0, 1}) {
    const auto& tpl = house_template(id);
    for (const auto& [object, start] : tpl.object_start) {
      int hits = 0;
      for (const auto& [room, receptacles] : tpl.room_receptacles) {
        hits += static_cast<int>(
            std::count(receptacles.begin(), receptacles.end(), start));
      }
      CHECK(hits == 1);
    }
  }
  CHECK_THROWS_AS(house_template(2), std::invalid_argument);
}

TEST_CASE("load_tasks is deterministic and respects the target constraint") {
  auto first = load_tasks(30, 0);
  auto second = load_tasks(30, 0);
  REQUIRE(first.size() == 30);
  for (std::size_t i = 0; i < first.size(); ++i) {
    CHECK(first[i].task_id == second[i].task_id);
    CHECK(first[i].template_id == second[i].template_id);
    CHECK(first[i].target_object == second[i].target_object);
    CHECK(first[i].target_receptacle == second[i].target_receptacle);
    CHECK(first[i].task_id == "minihouse_" + std::to_string(i));

    const auto& tpl = house_template(first[i].template_id);
    CHECK(first[i].target_receptacle != tpl.start_of(first[i].target_object));
  }
  // A different seed gives a different task list.
  auto other = load_tasks(30, 1);
  bool any_difference = false;
  for (std::size_t i = 0; i < other.size(); ++i) {
    if (other[i].target_object != first[i].target_object ||
        other[i].target_receptacle != first[i].target_receptacle ||
        other[i].template_id != first[i].template_id) {
      any_difference = true;
    }
  }
  CHECK(any_difference);
  CHECK_THROWS_AS(load_tasks(0, 0), std::invalid_argument);
}

TEST_CASE("reset: closed containers hide their contents") {
  HouseEnv env(make_task(0, "apple", "desk"));
  std::string obs = env.reset();
  CHECK(env.state().agent_room == "kitchen");
  CHECK(env.state().steps_taken == 0);
  CHECK_FALSE(env.state().done);
  CHECK(obs ==
        "You are in the kitchen. You see: countertop containing mug; "
        "fridge (closed); microwave (closed); sink. You are holding nothing.");
  CHECK(obs.find("apple") == std::string::npos);

  auto actions = env.valid_actions();
  CHECK(std::count(actions.begin(), actions.end(), "go to living_room") == 1);
  CHECK(std::count(actions.begin(), actions.end(), "go to bedroom") == 0);
  CHECK(std::count(actions.begin(), actions.end(), "open fridge") == 1);
  CHECK(std::count(actions.begin(), actions.end(), "take mug from countertop") ==
        1);
  CHECK(std::count(actions.begin(), actions.end(), "take apple from fridge") ==
        0);
}

TEST_CASE("step semantics: open, take, navigate, put to success") {
  HouseEnv env(make_task(0, "apple", "desk"));
  env.reset();

  auto r = env.step("open fridge");
  CHECK(r.observation.find("fridge (open) containing apple") !=
        std::string::npos);

  r = env.step("take apple from fridge");
  CHECK(env.state().holding == "apple");
  CHECK(env.state().object_location.at("apple") == "agent");

  env.step("go to living_room");
  r = env.step("go to bedroom");
  CHECK(env.state().agent_room == "bedroom");

  r = env.step("put apple in desk");
  CHECK(r.success);
  CHECK(r.done);
  CHECK(env.state().object_location.at("apple") == "desk");
  CHECK(env.state().holding.empty());
  CHECK(env.state().steps_taken == 5);

  CHECK_THROWS_AS(env.step("go to kitchen"), std::logic_error);
}

TEST_CASE("invalid actions cost a step and change nothing else") {
  HouseEnv env(make_task(0, "apple", "desk"));
  env.reset();
  auto before = env.state_json();

  auto r = env.step("go to mars");
  CHECK(r.observation == "Nothing happens.");
  CHECK(env.state().steps_taken == 1);
  auto after = env.state_json();
  after["steps_taken"] = 0;
  CHECK(before == after);

  // A closed container refuses take even with the right wording.
  r = env.step("take apple from fridge");
  CHECK(r.observation == "Nothing happens.");
  CHECK(env.state().holding.empty());
}

TEST_CASE("canonicalisation applies before matching actions") {
  HouseEnv env(make_task(0, "apple", "desk"));
  env.reset();
  auto r = env.step("  Open   FRIDGE!  ");
  CHECK(r.observation != "Nothing happens.");
  CHECK(env.state().open_flags.at("fridge"));
}

TEST_CASE("episode ends after 15 steps without success") {
  HouseEnv env(make_task(0, "apple", "desk"));
  env.reset();
  for (int i = 0; i < 15; ++i) {
    CHECK_FALSE(env.state().done);
    env.step("go to mars");
  }
  CHECK(env.state().done);
  CHECK_FALSE(env.state().success);
  CHECK(env.state().steps_taken == 15);
}

TEST_CASE("put enumeration tracks container accessibility") {
  HouseEnv env(make_task(0, "mug", "desk"));
  env.reset();
  env.step("take mug from countertop");
  REQUIRE(env.state().holding == "mug");

  auto actions = env.valid_actions();
  CHECK(std::count(actions.begin(), actions.end(), "put mug in countertop") ==
        1);
  CHECK(std::count(actions.begin(), actions.end(), "put mug in sink") == 1);
  CHECK(std::count(actions.begin(), actions.end(), "put mug in fridge") == 0);
  // Holding something in the kitchen: all three appliances are present.
  CHECK(std::count(actions.begin(), actions.end(), "heat mug") == 1);
  CHECK(std::count(actions.begin(), actions.end(), "cool mug") == 1);
  CHECK(std::count(actions.begin(), actions.end(), "clean mug") == 1);
  // No take actions while holding.
  for (const auto& a : actions) CHECK_FALSE(a.starts_with("take "));

  env.step("open fridge");
  actions = env.valid_actions();
  CHECK(std::count(actions.begin(), actions.end(), "put mug in fridge") == 1);
}

TEST_CASE("heat/cool/clean set flags and never finish a place task") {
  HouseEnv env(make_task(0, "mug", "desk"));
  env.reset();
  env.step("take mug from countertop");
  auto r = env.step("heat mug");
  CHECK_FALSE(r.success);
  CHECK_FALSE(r.done);
  CHECK(env.state().object_flags.at("mug").contains("heated"));
  r = env.step("cool mug");
  CHECK(env.state().object_flags.at("mug").contains("cooled"));
  CHECK_FALSE(r.success);
}

TEST_CASE("every advertised action is accepted, and objects are conserved") {
  SplitMix64 rng(17);
  auto tasks = load_tasks(20, 3);
  for (const auto& task : tasks) {
    HouseEnv env(task);
    env.reset();
    const auto& tpl = house_template(task.template_id);
    while (!env.state().done) {
      auto actions = env.valid_actions();
      REQUIRE_FALSE(actions.empty());
      // Two calls on an unchanged state enumerate identically.
      CHECK(env.valid_actions() == actions);
      const auto& action = actions[rng.next_below(actions.size())];
      auto r = env.step(action);
      CHECK(r.observation != "Nothing happens.");

      int held = 0;
      for (const auto& [object, start] : tpl.object_start) {
        const auto& loc = env.state().object_location.at(object);
        if (loc == "agent") {
          ++held;
          CHECK(env.state().holding == object);
        }
      }
      CHECK(held <= 1);
      if (held == 0) CHECK(env.state().holding.empty());
    }
    CHECK(env.state().steps_taken <= 15);
  }
}

TEST_CASE("oracle finds the canonical shortest plan across rooms") {
  auto plan = oracle_solve(make_task(0, "apple", "desk"));
  CHECK(plan == std::vector<std::string>{
                    "open fridge", "take apple from fridge",
                    "go to living_room", "go to bedroom", "put apple in desk"});
}

TEST_CASE("oracle plans within the starting room are short") {
  // Closed container in the same room: open, take, put.
  CHECK(oracle_solve(make_task(0, "apple", "countertop")).size() == 3);
  // Never-closed start: take, put.
  CHECK(oracle_solve(make_task(0, "mug", "sink")).size() == 2);
}

TEST_CASE("oracle plans replay to success through step()") {
  for (const auto& task : load_tasks(30, 0)) {
    auto plan = oracle_solve(task);
    CHECK(plan.size() <= 15);
    HouseEnv env(task);
    env.reset();
    for (const auto& action : plan) {
      auto r = env.step(action);
      CHECK(r.observation != "Nothing happens.");
    }
    CHECK(env.state().success);
  }
}

TEST_CASE("state serialisation round-trips deterministically") {
  auto trace_for = [](std::uint64_t seed) {
    SplitMix64 rng(seed);
    HouseEnv env(make_task(1, "soap", "desk"));
    env.reset();
    std::vector<std::string> dumps{env.state_json().dump()};
    while (!env.state().done) {
      auto actions = env.valid_actions();
      // Mix in the occasional invalid action.
      if (rng.next_below(4) == 0) {
        env.step("fly to the moon");
      } else {
        env.step(actions[rng.next_below(actions.size())]);
      }
      dumps.push_back(env.state_json().dump());
    }
    return dumps;
  };
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CHECK(trace_for(seed) == trace_for(seed));
  }
}
