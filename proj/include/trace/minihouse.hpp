#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "json.hpp"
#include "trace/canon.hpp"
#include "trace/rng.hpp"

namespace trace::minihouse {

inline constexpr int kEpisodeStepLimit = 15;

struct HouseTemplate {
  int template_id = 0;
  std::vector<std::string> rooms;  // rooms[0] is the agent's start room
  std::vector<std::pair<std::string, std::string>> adjacency;  // symmetric
  std::vector<std::pair<std::string, std::vector<std::string>>>
      room_receptacles;  // declaration order drives observation rendering
  std::vector<std::pair<std::string, std::string>> object_start;
  std::vector<std::string> closed_at_start;

  std::vector<std::string> all_receptacles() const {
    std::vector<std::string> out;
    for (const auto& [room, receptacles] : room_receptacles) {
      out.insert(out.end(), receptacles.begin(), receptacles.end());
    }
    return out;
  }

  std::string room_of(const std::string& receptacle) const {
    for (const auto& [room, receptacles] : room_receptacles) {
      for (const auto& r : receptacles) {
        if (r == receptacle) return room;
      }
    }
    throw std::invalid_argument("unknown receptacle: " + receptacle);
  }

  std::vector<std::string> adjacent_rooms(const std::string& room) const {
    std::vector<std::string> out;
    for (const auto& [a, b] : adjacency) {
      if (a == room) out.push_back(b);
      if (b == room) out.push_back(a);
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  const std::vector<std::string>& receptacles_in(const std::string& room) const {
    for (const auto& [r, receptacles] : room_receptacles) {
      if (r == room) return receptacles;
    }
    throw std::invalid_argument("unknown room: " + room);
  }

  bool is_closeable(const std::string& receptacle) const {
    return std::find(closed_at_start.begin(), closed_at_start.end(),
                     receptacle) != closed_at_start.end();
  }

  std::string start_of(const std::string& object) const {
    for (const auto& [o, r] : object_start) {
      if (o == object) return r;
    }
    throw std::invalid_argument("unknown object: " + object);
  }
};

inline const HouseTemplate& house_template(int id) {
  static const std::vector<HouseTemplate> templates = [] {
    std::vector<HouseTemplate> t(2);

    t[0].template_id = 0;
    t[0].rooms = {"kitchen", "living_room", "bedroom"};
    t[0].adjacency = {{"kitchen", "living_room"}, {"living_room", "bedroom"}};
    t[0].room_receptacles = {
        {"kitchen", {"countertop", "fridge", "microwave", "sink"}},
        {"living_room", {"coffee_table", "sofa"}},
        {"bedroom", {"bed", "desk", "drawer"}},
    };
    t[0].object_start = {{"apple", "fridge"},
                         {"mug", "countertop"},
                         {"book", "coffee_table"},
                         {"lamp", "desk"},
                         {"key", "drawer"}};
    t[0].closed_at_start = {"fridge", "microwave", "drawer"};

    t[1].template_id = 1;
    t[1].rooms = {"kitchen", "hallway", "office", "bathroom"};
    t[1].adjacency = {{"kitchen", "hallway"},
                      {"hallway", "office"},
                      {"hallway", "bathroom"}};
    t[1].room_receptacles = {
        {"kitchen", {"fridge", "stove", "table"}},
        {"hallway", {"shelf"}},
        {"office", {"desk", "bookshelf", "chair"}},
        {"bathroom", {"sink", "cabinet", "towel_rack"}},
    };
    t[1].object_start = {{"tomato", "fridge"},  {"bread", "table"},
                         {"umbrella", "shelf"}, {"pen", "desk"},
                         {"novel", "bookshelf"}, {"soap", "cabinet"},
                         {"towel", "towel_rack"}};
    t[1].closed_at_start = {"fridge", "cabinet"};

    return t;
  }();
  if (id < 0 || id >= static_cast<int>(templates.size())) {
    throw std::invalid_argument("unknown template id: " + std::to_string(id));
  }
  return templates[static_cast<std::size_t>(id)];
}

struct TaskSpec {
  std::string task_id;
  int template_id = 0;
  std::string target_object;
  std::string target_receptacle;
  std::string goal_text;
};

inline void to_json(nlohmann::json& j, const TaskSpec& task) {
  j = nlohmann::json{{"task_id", task.task_id},
                     {"template_id", task.template_id},
                     {"target_object", task.target_object},
                     {"target_receptacle", task.target_receptacle},
                     {"goal_text", task.goal_text}};
}

inline void from_json(const nlohmann::json& j, TaskSpec& task) {
  j.at("task_id").get_to(task.task_id);
  j.at("template_id").get_to(task.template_id);
  j.at("target_object").get_to(task.target_object);
  j.at("target_receptacle").get_to(task.target_receptacle);
  j.at("goal_text").get_to(task.goal_text);
}

// Seeded task generation: per task, draw template, then object, then a
// target receptacle uniformly from all receptacles except the object's start.
inline std::vector<TaskSpec> load_tasks(int n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("load_tasks requires n >= 1");
  SplitMix64 rng(seed);
  std::vector<TaskSpec> tasks;
  tasks.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const HouseTemplate& tpl =
        house_template(static_cast<int>(rng.next_below(2)));
    const auto& [object, start] =
        tpl.object_start[rng.next_below(tpl.object_start.size())];
    std::vector<std::string> candidates;
    for (const auto& r : tpl.all_receptacles()) {
      if (r != start) candidates.push_back(r);
    }
    const std::string& target = candidates[rng.next_below(candidates.size())];

    TaskSpec task;
    task.task_id = "minihouse_" + std::to_string(i);
    task.template_id = tpl.template_id;
    task.target_object = object;
    task.target_receptacle = target;
    task.goal_text = "Put the " + object + " in the " + target + ".";
    tasks.push_back(std::move(task));
  }
  return tasks;
}

struct HouseState {
  std::string agent_room;
  std::string holding;  // empty = hands free
  std::map<std::string, std::string> object_location;  // receptacle or "agent"
  std::map<std::string, bool> open_flags;  // closeable receptacles only
  std::map<std::string, std::set<std::string>> object_flags;
  int steps_taken = 0;
  bool done = false;
  bool success = false;
};

inline void to_json(nlohmann::json& j, const HouseState& s) {
  j = nlohmann::json{{"agent_room", s.agent_room},
                     {"holding", s.holding},
                     {"object_location", s.object_location},
                     {"open_flags", s.open_flags},
                     {"object_flags", s.object_flags},
                     {"steps_taken", s.steps_taken},
                     {"done", s.done},
                     {"success", s.success}};
}

// Deterministic household environment. One instance runs one episode;
// step() is a pure function of (state, action) and every valid action string
// it advertises is accepted verbatim.
class HouseEnv {
 public:
  explicit HouseEnv(TaskSpec task)
      : task_(std::move(task)), tpl_(&house_template(task_.template_id)) {
    reset();
  }

  const TaskSpec& task() const { return task_; }
  const HouseState& state() const { return state_; }

  std::string reset() {
    state_ = HouseState{};
    state_.agent_room = tpl_->rooms.front();
    for (const auto& [object, receptacle] : tpl_->object_start) {
      state_.object_location[object] = receptacle;
    }
    for (const auto& receptacle : tpl_->closed_at_start) {
      state_.open_flags[receptacle] = false;
    }
    return render();
  }

  bool receptacle_accessible(const std::string& receptacle) const {
    if (!tpl_->is_closeable(receptacle)) return true;
    return state_.open_flags.at(receptacle);
  }

  std::vector<std::string> valid_actions() const {
    std::vector<std::string> out;
    auto add_sorted = [&out](std::vector<std::string> group) {
      std::sort(group.begin(), group.end());
      out.insert(out.end(), group.begin(), group.end());
    };

    add_sorted([&] {
      std::vector<std::string> g;
      for (const auto& room : tpl_->adjacent_rooms(state_.agent_room)) {
        g.push_back("go to " + room);
      }
      return g;
    }());

    const auto& here = tpl_->receptacles_in(state_.agent_room);

    add_sorted([&] {
      std::vector<std::string> g;
      for (const auto& r : here) {
        if (tpl_->is_closeable(r) && !state_.open_flags.at(r)) {
          g.push_back("open " + r);
        }
      }
      return g;
    }());

    if (state_.holding.empty()) {
      add_sorted([&] {
        std::vector<std::string> g;
        for (const auto& r : here) {
          if (!receptacle_accessible(r)) continue;
          for (const auto& [object, loc] : state_.object_location) {
            if (loc == r) g.push_back("take " + object + " from " + r);
          }
        }
        return g;
      }());
    } else {
      add_sorted([&] {
        std::vector<std::string> g;
        for (const auto& r : here) {
          if (receptacle_accessible(r)) {
            g.push_back("put " + state_.holding + " in " + r);
          }
        }
        return g;
      }());
      std::vector<std::string> care;
      bool can_heat = room_has(here, "microwave") || room_has(here, "stove");
      bool can_cool = room_has(here, "fridge");
      bool can_clean = room_has(here, "sink");
      if (can_heat) care.push_back("heat " + state_.holding);
      if (can_cool) care.push_back("cool " + state_.holding);
      if (can_clean) care.push_back("clean " + state_.holding);
      add_sorted(std::move(care));
    }
    return out;
  }

  struct StepResult {
    std::string observation;
    bool done = false;
    bool success = false;
  };

  StepResult step(const std::string& action) {
    if (state_.done) {
      throw std::logic_error("step() called on a finished episode");
    }
    std::string key = canonicalise_action(action);
    auto valid = valid_actions();
    bool is_valid =
        std::find(valid.begin(), valid.end(), key) != valid.end();

    std::string observation;
    if (!is_valid) {
      observation = "Nothing happens.";
    } else {
      apply(key);
      observation = render();
    }
    state_.steps_taken += 1;
    state_.done = state_.success || state_.steps_taken >= kEpisodeStepLimit;
    return {observation, state_.done, state_.success};
  }

  std::string observation() const { return render(); }

  nlohmann::json state_json() const { return nlohmann::json(state_); }

 private:
  static bool room_has(const std::vector<std::string>& receptacles,
                       const std::string& name) {
    return std::find(receptacles.begin(), receptacles.end(), name) !=
           receptacles.end();
  }

  void apply(const std::string& action) {
    if (action.starts_with("go to ")) {
      state_.agent_room = action.substr(6);
    } else if (action.starts_with("open ")) {
      state_.open_flags[action.substr(5)] = true;
    } else if (action.starts_with("take ")) {
      auto sep = action.find(" from ");
      std::string object = action.substr(5, sep - 5);
      state_.object_location[object] = "agent";
      state_.holding = object;
    } else if (action.starts_with("put ")) {
      auto sep = action.find(" in ");
      std::string object = action.substr(4, sep - 4);
      std::string receptacle = action.substr(sep + 4);
      state_.object_location[object] = receptacle;
      state_.holding.clear();
      if (object == task_.target_object &&
          receptacle == task_.target_receptacle) {
        state_.success = true;
      }
    } else if (action.starts_with("heat ")) {
      state_.object_flags[action.substr(5)].insert("heated");
    } else if (action.starts_with("cool ")) {
      state_.object_flags[action.substr(5)].insert("cooled");
    } else if (action.starts_with("clean ")) {
      state_.object_flags[action.substr(6)].insert("cleaned");
    } else {
      throw std::logic_error("valid action fell through apply(): " + action);
    }
  }

  std::string render() const {
    std::string out = "You are in the " + state_.agent_room + ". You see: ";
    const auto& here = tpl_->receptacles_in(state_.agent_room);
    bool first = true;
    for (const auto& r : here) {
      if (!first) out += "; ";
      first = false;
      bool closeable = tpl_->is_closeable(r);
      if (closeable && !state_.open_flags.at(r)) {
        out += r + " (closed)";
        continue;
      }
      out += closeable ? r + " (open)" : r;
      std::string contents;
      for (const auto& [object, start] : tpl_->object_start) {
        if (state_.object_location.at(object) == r) {
          if (!contents.empty()) contents += ", ";
          contents += object;
        }
      }
      if (!contents.empty()) out += " containing " + contents;
    }
    if (first) out += "nothing";
    out += ". You are holding " +
           (state_.holding.empty() ? std::string("nothing") : state_.holding) +
           ".";
    return out;
  }

  TaskSpec task_;
  const HouseTemplate* tpl_;
  HouseState state_;
};

// Shortest plan via breadth-first search over (agent room, holding target,
// open flags, target object location). Actions touching non-target objects
// never shorten a plan here, so the search only branches on go/open and on
// take/put of the target object. Throws when no plan exists: a generated
// task that cannot be solved is an environment bug.
inline std::vector<std::string> oracle_solve(const TaskSpec& task) {
  const HouseTemplate& tpl = house_template(task.template_id);
  const auto receptacles = tpl.all_receptacles();
  const auto& closeable = tpl.closed_at_start;

  auto receptacle_index = [&](const std::string& name) {
    auto it = std::find(receptacles.begin(), receptacles.end(), name);
    return static_cast<int>(it - receptacles.begin());
  };
  auto room_index = [&](const std::string& name) {
    auto it = std::find(tpl.rooms.begin(), tpl.rooms.end(), name);
    return static_cast<int>(it - tpl.rooms.begin());
  };
  auto closeable_index = [&](const std::string& name) -> int {
    auto it = std::find(closeable.begin(), closeable.end(), name);
    return it == closeable.end() ? -1
                                 : static_cast<int>(it - closeable.begin());
  };

  struct Node {
    int room;
    int target_loc;  // receptacle index, or -1 when held
    std::uint32_t open_mask;
    int parent;
    std::string action;
  };

  auto encode = [](const Node& n) {
    return (static_cast<std::uint64_t>(n.room) << 40) ^
           (static_cast<std::uint64_t>(n.target_loc + 1) << 20) ^
           static_cast<std::uint64_t>(n.open_mask);
  };

  std::vector<Node> nodes;
  nodes.push_back({room_index(tpl.rooms.front()),
                   receptacle_index(tpl.start_of(task.target_object)), 0, -1,
                   ""});
  std::unordered_set<std::uint64_t> visited{encode(nodes[0])};
  std::deque<int> frontier{0};

  auto accessible = [&](int recep, std::uint32_t mask) {
    int ci = closeable_index(receptacles[static_cast<std::size_t>(recep)]);
    return ci < 0 || (mask & (1u << ci)) != 0;
  };

  int goal_node = -1;
  while (!frontier.empty() && goal_node < 0) {
    int current = frontier.front();
    frontier.pop_front();
    Node node = nodes[static_cast<std::size_t>(current)];
    const std::string& room = tpl.rooms[static_cast<std::size_t>(node.room)];

    auto push = [&](Node next) {
      next.parent = current;
      if (visited.insert(encode(next)).second) {
        nodes.push_back(next);
        frontier.push_back(static_cast<int>(nodes.size()) - 1);
      }
    };

    for (const auto& adjacent : tpl.adjacent_rooms(room)) {
      Node next = node;
      next.room = room_index(adjacent);
      next.action = "go to " + adjacent;
      push(next);
    }
    for (const auto& r : tpl.receptacles_in(room)) {
      int ci = closeable_index(r);
      if (ci >= 0 && (node.open_mask & (1u << ci)) == 0) {
        Node next = node;
        next.open_mask |= 1u << ci;
        next.action = "open " + r;
        push(next);
      }
    }
    if (node.target_loc >= 0) {
      const std::string& loc =
          receptacles[static_cast<std::size_t>(node.target_loc)];
      if (tpl.room_of(loc) == room && accessible(node.target_loc, node.open_mask)) {
        Node next = node;
        next.target_loc = -1;
        next.action = "take " + task.target_object + " from " + loc;
        push(next);
      }
    } else {
      for (const auto& r : tpl.receptacles_in(room)) {
        int ri = receptacle_index(r);
        if (!accessible(ri, node.open_mask)) continue;
        Node next = node;
        next.target_loc = ri;
        next.action = "put " + task.target_object + " in " + r;
        if (r == task.target_receptacle) {
          next.parent = current;
          nodes.push_back(next);
          goal_node = static_cast<int>(nodes.size()) - 1;
          break;
        }
        push(next);
      }
    }
  }

  if (goal_node < 0) {
    throw std::runtime_error("oracle_solve: task has no solution: " +
                             task.task_id);
  }
  std::vector<std::string> plan;
  for (int i = goal_node; nodes[static_cast<std::size_t>(i)].parent >= 0;
       i = nodes[static_cast<std::size_t>(i)].parent) {
    plan.push_back(nodes[static_cast<std::size_t>(i)].action);
  }
  std::reverse(plan.begin(), plan.end());
  return plan;
}

}  // namespace trace::minihouse
