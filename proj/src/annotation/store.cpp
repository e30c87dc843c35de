// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <chrono>
#include <fstream>
#include <set>

#include "refl/annotation.hpp"
#include "refl/error.hpp"

namespace refl::annotation {

namespace fs = std::filesystem;

const char* to_string(LabelOutcome o) {
  switch (o) {
    case LabelOutcome::kAccepted:
      return "accepted";
    case LabelOutcome::kAlreadyLabeled:
      return "pair is already labeled";
    case LabelOutcome::kStaleLease:
      return "lease expired or superseded";
    case LabelOutcome::kLeasedElsewhere:
      return "pair is leased to another annotator";
    case LabelOutcome::kNotFound:
      return "unknown pair";
    default:
      return "pair does not take human labels";
  }
}

std::int64_t system_clock_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

void PairStore::create(const fs::path& log_path, const std::vector<PreferencePair>& pairs) {
  std::vector<Json> lines;
  std::set<std::string> ids;
  for (const auto& p : pairs) {
    if (!ids.insert(p.pair_id).second) fail(ErrorCode::kInvalidArgument, "duplicate pair id " + p.pair_id);
    Json j = Json::object();
    j["type"] = "pair";
    const Json body = to_json(p);
    for (const auto& [k, v] : body.items()) j[k] = v;
    lines.push_back(std::move(j));
  }
  write_jsonl(log_path, lines);
}

PairStore::PairStore(fs::path log_path, Clock clock, std::int64_t lease_ms)
    : path_(std::move(log_path)), clock_(std::move(clock)), lease_ms_(lease_ms) {
  require(lease_ms_ > 0, "lease duration must be positive");
  if (!fs::exists(path_)) fail(ErrorCode::kDependency, "pairs log " + path_.string() + " does not exist");
  for (const auto& j : read_jsonl(path_)) {
    const std::string type = j.value("type", std::string("pair"));
    if (type == "pair") {
      Json body = j;
      body.erase("type");
      PreferencePair p = pair_from_json(body);
      if (index_.count(p.pair_id)) fail(ErrorCode::kInvalidArgument, "duplicate pair id " + p.pair_id);
      index_[p.pair_id] = pairs_.size();
      order_.push_back(pairs_.size());
      pairs_.push_back(std::move(p));
    } else if (type == "label") {
      const auto it = index_.find(j.at("pair_id").get<std::string>());
      if (it == index_.end()) fail(ErrorCode::kInvalidArgument, "label event for unknown pair " + j.at("pair_id").dump());
      auto& p = pairs_[it->second];
      p.label = label_from_string(j.at("label").get<std::string>());
      p.source = source_from_string(j.at("source").get<std::string>());
    } else {
      fail(ErrorCode::kInvalidArgument, "unknown event type '" + type + "' in " + path_.string());
    }
  }
}

std::optional<Checkout> PairStore::next() {
  std::lock_guard lock(mu_);
  const std::int64_t now = clock_();
  for (std::size_t idx : order_) {
    const auto& p = pairs_[idx];
    if (p.contains_ground_truth() || p.label != Label::kUnlabeled) continue;
    const auto it = leases_.find(p.pair_id);
    if (it != leases_.end() && it->second.expiry > now) continue;
    Lease lease{"L" + std::to_string(++lease_counter_) + "-" + std::to_string(now), now + lease_ms_};
    leases_[p.pair_id] = lease;
    return Checkout{p, lease.id, lease.expiry};
  }
  return std::nullopt;
}

LabelOutcome PairStore::label(const std::string& pair_id, Label label, Source source, const std::string& lease_id) {
  require(label != Label::kUnlabeled, "label must be a or b");
  require(source != Source::kNone, "label source must be set");
  std::lock_guard lock(mu_);
  const auto it = index_.find(pair_id);
  if (it == index_.end()) return LabelOutcome::kNotFound;
  auto& p = pairs_[it->second];
  if (p.label != Label::kUnlabeled) return LabelOutcome::kAlreadyLabeled;
  if (source == Source::kHuman && p.contains_ground_truth()) return LabelOutcome::kNotEligible;
  const std::int64_t now = clock_();
  const auto lease = leases_.find(pair_id);
  const bool active = lease != leases_.end() && lease->second.expiry > now;
  if (!lease_id.empty()) {
    if (!active || lease->second.id != lease_id) return LabelOutcome::kStaleLease;
  } else if (active) {
    return LabelOutcome::kLeasedElsewhere;
  }
  p.label = label;
  p.source = source;
  if (lease != leases_.end()) leases_.erase(lease);
  std::ofstream os(path_, std::ios::app);
  if (!os) fail(ErrorCode::kIo, "cannot append to " + path_.string());
  Json j = Json::object();
  j["type"] = "label";
  j["pair_id"] = pair_id;
  j["label"] = to_string(label);
  j["source"] = to_string(source);
  os << j.dump() << '\n';
  os.flush();
  if (!os) fail(ErrorCode::kIo, "short write to " + path_.string());
  return LabelOutcome::kAccepted;
}

void PairStore::set_priority(const std::vector<std::string>& pair_ids) {
  std::lock_guard lock(mu_);
  std::vector<std::size_t> order;
  std::vector<bool> seen(pairs_.size(), false);
  for (const auto& id : pair_ids) {
    const auto it = index_.find(id);
    if (it == index_.end() || seen[it->second]) continue;
    seen[it->second] = true;
    order.push_back(it->second);
  }
  for (std::size_t i = 0; i < pairs_.size(); ++i)
    if (!seen[i]) order.push_back(i);
  order_ = std::move(order);
}

Progress PairStore::progress() const {
  std::lock_guard lock(mu_);
  Progress pr;
  pr.total = static_cast<int>(pairs_.size());
  for (const auto& p : pairs_) {
    switch (p.source) {
      case Source::kFixedRule:
        ++pr.fixed_rule;
        break;
      case Source::kHuman:
        ++pr.human;
        break;
      case Source::kSvm:
        ++pr.svm;
        break;
      default:
        ++pr.unlabeled;
    }
  }
  return pr;
}

std::vector<PreferencePair> PairStore::pairs() const {
  std::lock_guard lock(mu_);
  return pairs_;
}

std::optional<PreferencePair> PairStore::find(const std::string& pair_id) const {
  std::lock_guard lock(mu_);
  const auto it = index_.find(pair_id);
  if (it == index_.end()) return std::nullopt;
  return pairs_[it->second];
}

// Every label event is flushed on write; this only exists so shutdown paths
// have an explicit sync point.
void PairStore::flush() { std::lock_guard lock(mu_); }

}  // namespace refl::annotation
