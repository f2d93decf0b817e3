#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace stic {

// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double x);
  double value() const { return sum_ + compensation_; }

 private:
  double sum_ = 0.0;
  double compensation_ = 0.0;
};

// Log-probability of a whole sequence: the sum of its per-token
// log-probabilities (nats). Throws PreconditionError on an empty sequence
// or a positive/NaN token log-probability.
double seq_logprob(std::span<const double> token_logprobs);

struct PreferenceLogprobRecord {
  std::string record_id;
  double policy_w = 0.0;  // log p_policy(preferred)
  double policy_l = 0.0;  // log p_policy(dispreferred)
  double ref_w = 0.0;     // log p_ref(preferred)
  double ref_l = 0.0;     // log p_ref(dispreferred)

  // All four finite and <= 0; throws PreconditionError.
  void validate() const;
};

struct LossConfig {
  double lambda = 0.1;          // not a published value; conventional DPO temperature
  double alpha = 1.0 / 1024.0;  // weight on -log p_policy(preferred)

  void validate() const;
};

struct LossGradient {
  double policy_w = 0.0;
  double policy_l = 0.0;
  double ref_w = 0.0;
  double ref_l = 0.0;
};

// l(t) = log(1 + exp(-t)), evaluated without overflow. Throws
// std::domain_error for non-finite t.
double logistic_loss(double t);
double sigmoid(double t);

// lambda * [(policy_w - ref_w) - (policy_l - ref_l)]
double margin(const PreferenceLogprobRecord& rec, double lambda);

double dpo_loss(const PreferenceLogprobRecord& rec, double lambda);

// Same arithmetic as dpo_loss. The caller supplies ref_* from the previous
// iterate and *_l for the model's own earlier generation.
double spin_loss(const PreferenceLogprobRecord& rec, double lambda);

// l(margin) - alpha * policy_w
double stic_loss(const PreferenceLogprobRecord& rec, const LossConfig& cfg);

// With s = sigmoid(-margin):
//   d/dpolicy_w = -lambda*s - alpha, d/dpolicy_l = lambda*s,
//   d/dref_w = lambda*s,             d/dref_l = -lambda*s.
LossGradient stic_loss_grad(const PreferenceLogprobRecord& rec, const LossConfig& cfg);

struct RecordLoss {
  std::string record_id;
  double loss = 0.0;
  double margin = 0.0;
  double dpo_term = 0.0;
  double reg_term = 0.0;
  LossGradient gradient;
};

struct LossReport {
  std::vector<RecordLoss> records;
  double mean_loss = 0.0;
  double mean_margin = 0.0;
  double fraction_positive_margin = 0.0;

  nlohmann::json to_json(const LossConfig& cfg, bool with_gradients) const;
};

// Unweighted mean over the batch, compensated summation in record order.
LossReport batch_report(std::span<const PreferenceLogprobRecord> records, const LossConfig& cfg);

PreferenceLogprobRecord logprob_record_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PreferenceLogprobRecord& rec);

// JSONL with "id", "policy_w", "policy_l", "ref_w", "ref_l". Throws
// FormatError listing every bad line as "path:line: reason".
std::vector<PreferenceLogprobRecord> read_logprob_records(const std::filesystem::path& path);

}  // namespace stic
