#include "chrono/losses.hpp"

#include <cmath>

namespace chrono::losses {

namespace {

void check_scores_open_unit(const std::vector<double>& scores) {
  for (double s : scores) {
    if (!(s > 0.0 && s < 1.0)) {
      fail(ErrorCode::DomainError, "score outside (0,1): " + std::to_string(s));
    }
  }
  if (scores.empty()) fail(ErrorCode::DomainError, "empty score list");
}

double clamp_eps(double s) { return std::min(1.0 - kScoreEps, std::max(kScoreEps, s)); }

}  // namespace

torch::Tensor clamp_scores(const torch::Tensor& scores) {
  return scores.clamp(kScoreEps, 1.0 - kScoreEps);
}

torch::Tensor adv_real_term_t(const torch::Tensor& scores) {
  return torch::log(clamp_scores(scores)).mean();
}

torch::Tensor adv_fake_term_t(const torch::Tensor& scores, bool literal_form) {
  if (literal_form) return (1.0 - torch::log(clamp_scores(scores))).mean();
  return torch::log(1.0 - clamp_scores(scores)).mean();
}

torch::Tensor gen_fake_term_t(const torch::Tensor& scores) {
  return torch::log(clamp_scores(scores)).mean();
}

torch::Tensor adv_real_term_logits(const torch::Tensor& logits) {
  return -torch::softplus(-logits).mean();
}

torch::Tensor adv_fake_term_logits(const torch::Tensor& logits, bool literal_form) {
  if (literal_form) return (1.0 + torch::softplus(-logits)).mean();
  return -torch::softplus(logits).mean();
}

torch::Tensor gen_fake_term_logits(const torch::Tensor& logits) {
  return -torch::softplus(-logits).mean();
}

torch::Tensor rec_l1_t(const torch::Tensor& translated, const torch::Tensor& original) {
  if (!translated.sizes().equals(original.sizes())) {
    fail(ErrorCode::ShapeError, "reconstruction loss on mismatched shapes");
  }
  return (translated - original).abs().mean();
}

double adv_real_term(const std::vector<double>& scores) {
  check_scores_open_unit(scores);
  double acc = 0;
  for (double s : scores) acc += std::log(clamp_eps(s));
  return acc / static_cast<double>(scores.size());
}

double adv_fake_term(const std::vector<double>& scores, bool literal_form) {
  check_scores_open_unit(scores);
  double acc = 0;
  for (double s : scores) {
    acc += literal_form ? 1.0 - std::log(clamp_eps(s)) : std::log(1.0 - clamp_eps(s));
  }
  return acc / static_cast<double>(scores.size());
}

LossReport loss_uncond(DatasetDomain domain, const std::vector<double>& real_scores,
                       const std::vector<double>& fake_scores, bool literal_form) {
  LossReport report;
  report.name = domain == DatasetDomain::Labeled ? "uncond_labeled" : "uncond_unlabeled";
  const double real = adv_real_term(real_scores);
  const double fake = adv_fake_term(fake_scores, literal_form);
  report.term_breakdown["real"] = real;
  report.term_breakdown["fake"] = fake;
  report.value = real + fake;
  return report;
}

LossReport loss_cond(double real_set_score, double negative_set_score, double fake_set_score,
                     bool literal_form) {
  LossReport report;
  report.name = "cond";
  const double real = adv_real_term({real_set_score});
  const double neg = adv_fake_term({negative_set_score}, literal_form);
  const double fake = adv_fake_term({fake_set_score}, literal_form);
  report.term_breakdown["real"] = real;
  report.term_breakdown["negative"] = neg;
  report.term_breakdown["fake"] = fake;
  report.value = real + neg + fake;
  return report;
}

double loss_rec(const ImageGrid& translated, const ImageGrid& original) {
  return mean_abs_difference(translated, original);
}

LossReport total_objective(const std::vector<LossReport>& reports, double lambda_rec) {
  if (lambda_rec < 0.0) fail(ErrorCode::InvalidArgument, "lambda_rec must be >= 0");
  LossReport total;
  total.name = "total";
  for (const auto& r : reports) {
    const double w = r.name == "rec" ? lambda_rec : 1.0;
    total.term_breakdown[r.name] = w * r.value;
    total.value += w * r.value;
  }
  return total;
}

}  // namespace chrono::losses
