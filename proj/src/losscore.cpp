#include "stic/losscore.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "stic/errors.hpp"

namespace stic {

void CompensatedSum::add(double x) {
  const double t = sum_ + x;
  if (std::fabs(sum_) >= std::fabs(x)) {
    compensation_ += (sum_ - t) + x;
  } else {
    compensation_ += (x - t) + sum_;
  }
  sum_ = t;
}

double seq_logprob(std::span<const double> token_logprobs) {
  if (token_logprobs.empty()) throw PreconditionError("sequence log-prob of an empty sequence");
  CompensatedSum total;
  for (double lp : token_logprobs) {
    if (!(lp <= 0.0)) throw PreconditionError("token log-probability must be <= 0");
    total.add(lp);
  }
  return total.value();
}

void PreferenceLogprobRecord::validate() const {
  for (double v : {policy_w, policy_l, ref_w, ref_l}) {
    if (!std::isfinite(v) || v > 0.0) {
      throw PreconditionError("record '" + record_id + "': sequence log-probs must be finite and <= 0");
    }
  }
}

void LossConfig::validate() const {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw PreconditionError("lambda must be positive");
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw PreconditionError("alpha must be non-negative");
}

double logistic_loss(double t) {
  if (!std::isfinite(t)) throw std::domain_error("logistic loss of a non-finite value");
  if (t > 0.0) return std::log1p(std::exp(-t));
  return -t + std::log1p(std::exp(t));
}

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

double margin(const PreferenceLogprobRecord& rec, double lambda) {
  return lambda * ((rec.policy_w - rec.ref_w) - (rec.policy_l - rec.ref_l));
}

double dpo_loss(const PreferenceLogprobRecord& rec, double lambda) { return logistic_loss(margin(rec, lambda)); }

double spin_loss(const PreferenceLogprobRecord& rec, double lambda) { return dpo_loss(rec, lambda); }

double stic_loss(const PreferenceLogprobRecord& rec, const LossConfig& cfg) {
  return dpo_loss(rec, cfg.lambda) - cfg.alpha * rec.policy_w;
}

LossGradient stic_loss_grad(const PreferenceLogprobRecord& rec, const LossConfig& cfg) {
  const double ls = cfg.lambda * sigmoid(-margin(rec, cfg.lambda));
  return {-ls - cfg.alpha, ls, ls, -ls};
}

LossReport batch_report(std::span<const PreferenceLogprobRecord> records, const LossConfig& cfg) {
  if (records.empty()) throw PreconditionError("loss report over an empty batch");
  cfg.validate();
  LossReport report;
  report.records.reserve(records.size());
  CompensatedSum loss_sum;
  CompensatedSum margin_sum;
  std::size_t positive = 0;
  for (const auto& rec : records) {
    rec.validate();
    RecordLoss r;
    r.record_id = rec.record_id;
    r.margin = margin(rec, cfg.lambda);
    r.dpo_term = logistic_loss(r.margin);
    r.reg_term = -cfg.alpha * rec.policy_w;
    r.loss = r.dpo_term + r.reg_term;
    r.gradient = stic_loss_grad(rec, cfg);
    loss_sum.add(r.loss);
    margin_sum.add(r.margin);
    if (r.margin > 0.0) ++positive;
    report.records.push_back(std::move(r));
  }
  const double n = static_cast<double>(records.size());
  report.mean_loss = loss_sum.value() / n;
  report.mean_margin = margin_sum.value() / n;
  report.fraction_positive_margin = static_cast<double>(positive) / n;
  return report;
}

nlohmann::json LossReport::to_json(const LossConfig& cfg, bool with_gradients) const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : records) {
    nlohmann::json row{{"id", r.record_id},
                       {"loss", r.loss},
                       {"margin", r.margin},
                       {"dpo_term", r.dpo_term},
                       {"reg_term", r.reg_term}};
    if (with_gradients) {
      row["gradient"] = {{"policy_w", r.gradient.policy_w},
                         {"policy_l", r.gradient.policy_l},
                         {"ref_w", r.gradient.ref_w},
                         {"ref_l", r.gradient.ref_l}};
    }
    rows.push_back(std::move(row));
  }
  return {{"lambda", cfg.lambda},
          {"alpha", cfg.alpha},
          {"records", std::move(rows)},
          {"aggregate",
           {{"count", records.size()},
            {"mean_loss", mean_loss},
            {"mean_margin", mean_margin},
            {"fraction_positive_margin", fraction_positive_margin}}}};
}

PreferenceLogprobRecord logprob_record_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw FormatError("record is not a JSON object");
  auto number = [&](const char* key) {
    if (!j.contains(key)) throw FormatError(std::string("missing field \"") + key + "\"");
    if (!j[key].is_number()) throw FormatError(std::string("field \"") + key + "\" is not a number");
    return j[key].get<double>();
  };
  PreferenceLogprobRecord rec;
  if (!j.contains("id") || !(j["id"].is_string() || j["id"].is_number_integer())) {
    throw FormatError("missing field \"id\"");
  }
  rec.record_id = j["id"].is_string() ? j["id"].get<std::string>() : std::to_string(j["id"].get<long long>());
  rec.policy_w = number("policy_w");
  rec.policy_l = number("policy_l");
  rec.ref_w = number("ref_w");
  rec.ref_l = number("ref_l");
  try {
    rec.validate();
  } catch (const PreconditionError& e) {
    throw FormatError(e.what());
  }
  return rec;
}

nlohmann::json to_json(const PreferenceLogprobRecord& rec) {
  return {{"id", rec.record_id},
          {"policy_w", rec.policy_w},
          {"policy_l", rec.policy_l},
          {"ref_w", rec.ref_w},
          {"ref_l", rec.ref_l}};
}

std::vector<PreferenceLogprobRecord> read_logprob_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<PreferenceLogprobRecord> out;
  std::vector<std::string> problems;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(logprob_record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      problems.push_back(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const FormatError& e) {
      problems.push_back(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!problems.empty()) {
    std::string msg = std::to_string(problems.size()) + " malformed record(s)";
    for (const auto& p : problems) msg += "\n  " + p;
    throw FormatError(msg);
  }
  return out;
}

}  // namespace stic
