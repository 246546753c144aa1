#pragma once

#include <map>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "chrono/image.hpp"

namespace chrono::losses {

/// Scores are clamped into [kScoreEps, 1-kScoreEps] before any log.
inline constexpr double kScoreEps = 1e-7;

struct LossReport {
  std::string name;
  double value = 0.0;
  std::map<std::string, double> term_breakdown;
};

enum class DatasetDomain { Labeled, Unlabeled };

// -- Differentiable tensor forms (used by the trainer) ------------------------

torch::Tensor clamp_scores(const torch::Tensor& scores);

/// mean log D(x) over real-sample scores.
torch::Tensor adv_real_term_t(const torch::Tensor& scores);

/// mean log(1 - D(G(..))) over fake-sample scores. With `literal_form` the
/// term is computed as mean(1 - log D) instead (see TrainConfig).
torch::Tensor adv_fake_term_t(const torch::Tensor& scores, bool literal_form = false);

/// Non-saturating generator term: mean log D(fake), to be maximized.
torch::Tensor gen_fake_term_t(const torch::Tensor& scores);

// Logit-domain forms of the same terms, log D = -softplus(-logit) and
// log(1-D) = -softplus(logit). Values match the score forms (up to the score
// clamp), but gradients stay alive when a discriminator saturates — the
// clamped-score path goes exactly flat outside [eps, 1-eps], which starves
// the generator precisely when it is losing.
torch::Tensor adv_real_term_logits(const torch::Tensor& logits);
torch::Tensor adv_fake_term_logits(const torch::Tensor& logits, bool literal_form = false);
torch::Tensor gen_fake_term_logits(const torch::Tensor& logits);

/// Mean absolute difference, the domain-reconstruction penalty.
torch::Tensor rec_l1_t(const torch::Tensor& translated, const torch::Tensor& original);

// -- Scalar forms (reporting, tests, python surface) --------------------------

double adv_real_term(const std::vector<double>& scores);
double adv_fake_term(const std::vector<double>& scores, bool literal_form = false);

/// Discriminator value for one domain: adv_real + adv_fake.
LossReport loss_uncond(DatasetDomain domain, const std::vector<double>& real_scores,
                       const std::vector<double>& fake_scores, bool literal_form = false);

/// Conditional set value: log(real) + log(1-negative) + log(1-fake).
LossReport loss_cond(double real_set_score, double negative_set_score, double fake_set_score,
                     bool literal_form = false);

double loss_rec(const ImageGrid& translated, const ImageGrid& original);

/// Weighted sum of reports; any report named "rec" is scaled by lambda_rec.
LossReport total_objective(const std::vector<LossReport>& reports, double lambda_rec);

}  // namespace chrono::losses
