/*
    Licensed under the Apache License, Version 2.0 (the "License");
    you may not use this file except in compliance with the License.
    You may obtain a copy of the License at

        https://www.apache.org/licenses/LICENSE-2.0

    Unless required by applicable law or agreed to in writing, software
    distributed under the License is distributed on an "AS IS" BASIS,
    WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
    See the License for the specific language governing permissions and
    limitations under the License.
*/

#ifndef ELSTREAM_SCENARIO_HPP_
#define ELSTREAM_SCENARIO_HPP_

#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include <elstream/crypto.hpp>
#include <elstream/errors.hpp>
#include <elstream/operator_runtime.hpp>
#include <elstream/simnet.hpp>
#include <elstream/workloads.hpp>

namespace elstream {

struct SourceSpec {
    NodeId node = 0;
    GeneratorConfig gen;
};

struct OperatorSpec {
    OperatorDescriptor desc;
    NodeId node = 0;
};

struct LinkSpec {
    NodeId from = 0;
    NodeId to = 0;
    DelayDist delay = DelayDist::fixed(1);
    double duplicate_prob = 0.0;
};

struct MigrationSpec {
    std::uint64_t trigger_step = 0;
    std::uint64_t op_id = 0;
    std::uint32_t partition = 0;
    NodeId target_node = 0;
};

/// One reproducible run: pipeline description, fault/duplication settings,
/// migration triggers, and the security boundary toggle.
struct Scenario {
    std::uint64_t seed = 42;
    std::uint64_t max_steps = 200000;
    std::uint64_t stall_limit = 2000;
    std::uint32_t sync_window = 16;
    bool enclave_mode = false;
    std::uint64_t enclave_budget_bytes = kDefaultMemoryBudgetBytes;
    std::uint64_t enclave_frame_bytes = 4096;
    NodeId sink_node = 0;
    DelayDist default_delay = DelayDist::fixed(1);
    double default_duplicate_prob = 0.0;
    std::vector<SourceSpec> sources;
    std::vector<OperatorSpec> operators;  // pipeline order
    std::vector<LinkSpec> links;
    std::vector<MigrationSpec> migrations;
    Key256 master_key{};  // scenario-provisioned pre-shared secret

    // Fault-injection toggles for negative tests.
    bool corrupt_snapshot_transfer = false;
    std::uint64_t tamper_attestation_op = 0;  // 0 = none

    void validate() const {
        if (sink_node == 0) throw ConfigError("sink_node is required");
        if (sources.empty()) throw ConfigError("at least one source required");
        if (operators.empty()) throw ConfigError("at least one operator required");
        std::set<NodeId> nodes{sink_node};
        std::set<SourceId> source_ids;
        for (const auto& s : sources) {
            if (!nodes.insert(s.node).second) throw ConfigError("duplicate node id");
            if (!source_ids.insert(s.gen.source_id).second)
                throw ConfigError("duplicate source id");
        }
        std::set<std::uint64_t> op_ids;
        for (const auto& op : operators) {
            if (!nodes.insert(op.node).second) throw ConfigError("duplicate node id");
            if (!op_ids.insert(op.desc.op_id).second) throw ConfigError("duplicate op_id");
            if (op.desc.parallelism < 1) throw ConfigError("parallelism must be >= 1");
            if (!LogicRegistry::instance().known(op.desc.logic_id))
                throw ConfigError("unknown logic '" + op.desc.logic_id + "' for operator '" +
                                  op.desc.name + "'");
        }
        for (const auto& m : migrations) {
            auto it = std::find_if(operators.begin(), operators.end(),
                                   [&](const OperatorSpec& op) {
                                       return op.desc.op_id == m.op_id;
                                   });
            if (it == operators.end())
                throw ConfigError("migration references unknown op_id " +
                                  std::to_string(m.op_id));
            if (m.partition >= it->desc.parallelism)
                throw ConfigError("migration partition out of range");
            if (nodes.contains(m.target_node))
                throw ConfigError("migration target node already in use");
            if (m.target_node == it->node)
                throw ConfigError("migration target equals source node");
        }
        if (sync_window < 1) throw ConfigError("sync_window must be >= 1");
    }
};

namespace detail {

template <typename T>
T json_get(const nlohmann::json& j, const std::string& field, T fallback) {
    if (!j.contains(field)) return fallback;
    try {
        return j.at(field).get<T>();
    } catch (const nlohmann::json::exception& ex) {
        throw ConfigError("field '" + field + "': " + ex.what());
    }
}

template <typename T>
T json_require(const nlohmann::json& j, const std::string& field) {
    if (!j.contains(field)) throw ConfigError("missing required field '" + field + "'");
    try {
        return j.at(field).get<T>();
    } catch (const nlohmann::json::exception& ex) {
        throw ConfigError("field '" + field + "': " + ex.what());
    }
}

}  // namespace detail

inline Scenario parse_scenario(const nlohmann::json& j) {
    using detail::json_get;
    using detail::json_require;
    Scenario s;
    s.seed = json_get<std::uint64_t>(j, "seed", s.seed);
    s.max_steps = json_get<std::uint64_t>(j, "max_steps", s.max_steps);
    s.stall_limit = json_get<std::uint64_t>(j, "stall_limit", s.stall_limit);
    s.sync_window = json_get<std::uint32_t>(j, "sync_window", s.sync_window);
    s.sink_node = json_require<NodeId>(j, "sink_node");
    s.default_delay = DelayDist::parse(json_get<std::string>(j, "default_delay", "fixed(1)"));
    s.default_duplicate_prob = json_get<double>(j, "default_duplicate_prob", 0.0);
    s.corrupt_snapshot_transfer = json_get<bool>(j, "corrupt_snapshot_transfer", false);
    s.tamper_attestation_op = json_get<std::uint64_t>(j, "tamper_attestation_op", 0);
    if (j.contains("enclave")) {
        const auto& e = j.at("enclave");
        s.enclave_mode = json_get<bool>(e, "enabled", true);
        s.enclave_budget_bytes =
            json_get<std::uint64_t>(e, "budget_bytes", kDefaultMemoryBudgetBytes);
        s.enclave_frame_bytes = json_get<std::uint64_t>(e, "frame_bytes", 4096);
    }
    std::string key_seed = json_get<std::string>(j, "master_key_seed", "elstream-test-master");
    s.master_key = sha256(key_seed);

    for (const auto& js : json_require<nlohmann::json>(j, "sources")) {
        SourceSpec src;
        src.node = json_require<NodeId>(js, "node");
        src.gen.source_id = json_require<SourceId>(js, "id");
        src.gen.seed = json_get<std::uint64_t>(js, "seed", src.gen.source_id);
        src.gen.plugs = json_get<std::uint64_t>(js, "plugs", 5);
        src.gen.events = json_get<std::uint64_t>(js, "events", 500);
        src.gen.plug_id_base = json_get<std::uint64_t>(js, "plug_base", 0);
        src.gen.slots_per_day = json_get<std::uint64_t>(js, "slots", 96);
        src.gen.watermark_interval = json_get<std::uint64_t>(js, "watermark_interval", 10);
        src.gen.noise_permille = json_get<std::uint64_t>(js, "noise_permille", 100);
        if (js.contains("anomalies")) {
            for (const auto& ja : js.at("anomalies")) {
                AnomalyBurst burst;
                burst.plug_id = json_require<std::uint64_t>(ja, "plug");
                burst.from_reading = json_require<std::uint64_t>(ja, "from");
                burst.to_reading = json_require<std::uint64_t>(ja, "to");
                burst.factor = json_get<std::uint64_t>(ja, "factor", 10);
                src.gen.anomalies.push_back(burst);
            }
        }
        s.sources.push_back(std::move(src));
    }

    for (const auto& jo : json_require<nlohmann::json>(j, "operators")) {
        OperatorSpec op;
        op.node = json_require<NodeId>(jo, "node");
        op.desc.op_id = json_require<std::uint64_t>(jo, "op_id");
        op.desc.name = json_get<std::string>(jo, "name", "op" + std::to_string(op.desc.op_id));
        op.desc.logic_id = json_require<std::string>(jo, "logic");
        op.desc.parallelism = json_get<std::uint32_t>(jo, "parallelism", 1);
        op.desc.commutative = json_get<bool>(jo, "commutative", false);
        if (jo.contains("params")) {
            for (const auto& [k, v] : jo.at("params").items()) {
                op.desc.params[k] = v.get<std::string>();
            }
        }
        s.operators.push_back(std::move(op));
    }

    if (j.contains("links")) {
        for (const auto& jl : j.at("links")) {
            LinkSpec link;
            link.from = json_require<NodeId>(jl, "from");
            link.to = json_require<NodeId>(jl, "to");
            link.delay = DelayDist::parse(
                json_get<std::string>(jl, "delay", "fixed(1)"));
            link.duplicate_prob = json_get<double>(jl, "duplicate_prob", 0.0);
            if (link.duplicate_prob < 0.0 || link.duplicate_prob > 1.0) {
                throw ConfigError("duplicate_prob out of [0,1]");
            }
            s.links.push_back(link);
        }
    }

    if (j.contains("migrations")) {
        for (const auto& jm : j.at("migrations")) {
            MigrationSpec m;
            m.trigger_step = json_require<std::uint64_t>(jm, "step");
            m.op_id = json_require<std::uint64_t>(jm, "op_id");
            m.partition = json_get<std::uint32_t>(jm, "partition", 0);
            m.target_node = json_require<NodeId>(jm, "target");
            s.migrations.push_back(m);
        }
    }

    s.validate();
    return s;
}

inline Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scenario file '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& ex) {
        throw ConfigError(path + ": " + ex.what());
    }
    try {
        return parse_scenario(j);
    } catch (const ConfigError& ex) {
        throw ConfigError(path + ": " + ex.what());
    }
}

}  // namespace elstream

#endif  // ELSTREAM_SCENARIO_HPP_
