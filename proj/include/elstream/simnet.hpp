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

#ifndef ELSTREAM_SIMNET_HPP_
#define ELSTREAM_SIMNET_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <queue>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <elstream/errors.hpp>
#include <elstream/event.hpp>

namespace elstream {

using NodeId = std::uint64_t;

/// Link delay in logical steps: fixed(n) or uniform(lo,hi).
struct DelayDist {
    enum class Kind { Fixed, Uniform } kind = Kind::Fixed;
    std::uint64_t lo = 0;
    std::uint64_t hi = 0;

    static DelayDist fixed(std::uint64_t n) { return DelayDist{Kind::Fixed, n, n}; }
    static DelayDist uniform(std::uint64_t lo, std::uint64_t hi) {
        if (lo > hi) {
            throw ConfigError("uniform delay lo > hi");
        }
        return DelayDist{Kind::Uniform, lo, hi};
    }

    /// Parses "fixed(2)" or "uniform(1,5)".
    static DelayDist parse(const std::string& text) {
        auto open = text.find('(');
        auto close = text.rfind(')');
        if (open == std::string::npos || close == std::string::npos || close < open) {
            throw ConfigError("bad delay descriptor '" + text + "'");
        }
        std::string name = text.substr(0, open);
        std::string args = text.substr(open + 1, close - open - 1);
        try {
            if (name == "fixed") {
                return fixed(std::stoull(args));
            }
            if (name == "uniform") {
                auto comma = args.find(',');
                if (comma == std::string::npos) {
                    throw ConfigError("uniform needs two bounds: '" + text + "'");
                }
                return uniform(std::stoull(args.substr(0, comma)),
                               std::stoull(args.substr(comma + 1)));
            }
        } catch (const std::invalid_argument&) {
            throw ConfigError("bad delay bounds in '" + text + "'");
        }
        throw ConfigError("unknown delay kind '" + name + "'");
    }

    std::uint64_t sample(std::mt19937_64& rng) const {
        if (kind == Kind::Fixed) return lo;
        return std::uniform_int_distribution<std::uint64_t>(lo, hi)(rng);
    }
};

struct LinkConfig {
    NodeId from = 0;
    NodeId to = 0;
    DelayDist delay;
    double duplicate_prob = 0.0;
};

/// A message in flight: the event, optionally in encrypted wire form.
struct Message {
    NodeId from = 0;
    NodeId to = 0;
    Event event;
    Bytes wire;  // non-empty when the channel is encrypted
    std::uint64_t sent_step = 0;
    bool injected_duplicate = false;
};

/// Single-threaded discrete-step network. Per-link FIFO holds even under
/// random delays: a message never overtakes its predecessor on the same
/// link. Everything — delays, duplicate injection, interleaving across
/// links — is a deterministic function of (seed, config, send order).
class Simulator {
  public:
    explicit Simulator(std::uint64_t seed) : rng_(seed) {}

    void add_link(const LinkConfig& config) { links_[{config.from, config.to}] = Link{config, 0}; }

    bool has_link(NodeId from, NodeId to) const { return links_.contains({from, to}); }

    void send(NodeId from, NodeId to, Event event, Bytes wire = {}) {
        auto it = links_.find({from, to});
        if (it == links_.end()) {
            throw UnknownLink(std::to_string(from) + " -> " + std::to_string(to));
        }
        Link& link = it->second;
        std::uint64_t at = step_ + 1 + link.config.delay.sample(rng_);
        if (at < link.next_free) {
            at = link.next_free;  // head-of-line: preserve FIFO
        }
        link.next_free = at;
        Message msg{from, to, std::move(event), std::move(wire), step_, false};
        bool duplicate = link.config.duplicate_prob > 0.0 &&
                         std::uniform_real_distribution<double>(0.0, 1.0)(rng_) <
                             link.config.duplicate_prob;
        pending_.push(Pending{at, seq_++, msg});
        if (duplicate) {
            msg.injected_duplicate = true;
            pending_.push(Pending{at, seq_++, std::move(msg)});
        }
    }

    /// Advances the clock one step and returns the deliveries due, in
    /// (deliver-at, send-sequence) order.
    std::vector<Message> advance() {
        ++step_;
        std::vector<Message> out;
        while (!pending_.empty() && pending_.top().at <= step_) {
            out.push_back(pending_.top().message);
            pending_.pop();
        }
        return out;
    }

    std::uint64_t now() const { return step_; }
    bool idle() const { return pending_.empty(); }
    std::size_t in_flight() const { return pending_.size(); }

  private:
    struct Link {
        LinkConfig config;
        std::uint64_t next_free = 0;
    };

    struct Pending {
        std::uint64_t at;
        std::uint64_t seq;
        Message message;
        bool operator>(const Pending& other) const {
            if (at != other.at) return at > other.at;
            return seq > other.seq;
        }
    };

    std::map<std::pair<NodeId, NodeId>, Link> links_;
    std::priority_queue<Pending, std::vector<Pending>, std::greater<>> pending_;
    std::mt19937_64 rng_;
    std::uint64_t step_ = 0;
    std::uint64_t seq_ = 0;
};

}  // namespace elstream

#endif  // ELSTREAM_SIMNET_HPP_
