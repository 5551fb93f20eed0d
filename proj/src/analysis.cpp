#include "morphoglot/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "morphoglot/random.hpp"

namespace morphoglot {

std::vector<WordInContext> corpus_words(const Corpus& corpus, const PromptOptions& options) {
  std::vector<WordInContext> out;
  std::set<std::string> seen;
  for (const auto& sentence : corpus.sentences)
    for (std::size_t w = 0; w < sentence.words.size(); ++w) {
      if (is_punctuation_only(sentence.words[w])) continue;
      WordInContext word = word_in_context(sentence, w, options);
      if (seen.insert(render_word_prompt(word)).second) out.push_back(std::move(word));
    }
  return out;
}

std::vector<WordNeighbor> nearest_words(const EncoderModel& encoder,
                                        const std::vector<WordInContext>& pool,
                                        const WordInContext& query, int k) {
  if (k <= 0) throw std::invalid_argument("nearest_words: k must be positive");
  std::vector<WordInContext> distinct;
  std::vector<std::string> prompts;
  std::set<std::string> seen;
  for (const auto& w : pool) {
    std::string p = render_word_prompt(w);
    if (!seen.insert(p).second) continue;
    prompts.push_back(std::move(p));
    distinct.push_back(w);
  }
  if (distinct.empty()) return {};
  const Matrix<float> emb = embed_words(encoder, distinct);
  const Eigen::VectorXf q = embed_word(encoder, query);
  const Eigen::VectorXf sims = emb * q;
  std::vector<std::size_t> order(distinct.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return sims(static_cast<Eigen::Index>(a)) > sims(static_cast<Eigen::Index>(b));
  });
  order.resize(std::min(order.size(), static_cast<std::size_t>(k)));
  std::vector<WordNeighbor> out;
  for (auto i : order)
    out.push_back({prompts[i], distinct[i], sims(static_cast<Eigen::Index>(i))});
  return out;
}

AnalogyScore analogy_consistency(const Eigen::MatrixXd& sources, const Eigen::MatrixXd& targets) {
  if (sources.rows() != targets.rows() || sources.cols() != targets.cols())
    throw std::invalid_argument("analogy_consistency: shape mismatch");
  AnalogyScore score;
  std::vector<Eigen::VectorXd> diffs;
  for (Eigen::Index i = 0; i < sources.rows(); ++i) {
    Eigen::VectorXd d = (targets.row(i) - sources.row(i)).transpose();
    if (d.norm() < 1e-9) {
      ++score.pairs_excluded;
      continue;
    }
    diffs.push_back(std::move(d));
  }
  if (diffs.size() < 2)
    throw std::invalid_argument("analogy_consistency: fewer than 2 usable pairs");
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t a = 0; a < diffs.size(); ++a)
    for (std::size_t b = a + 1; b < diffs.size(); ++b) {
      sum += diffs[a].dot(diffs[b]) / (diffs[a].norm() * diffs[b].norm());
      ++count;
    }
  score.mean_cosine = sum / static_cast<double>(count);
  score.pairs_used = diffs.size();
  return score;
}

AnalogyScore analogy_consistency(const EncoderModel& encoder, const TransformationGroup& group) {
  std::vector<WordInContext> sources, targets;
  for (const auto& [s, t] : group.pairs) {
    sources.push_back(s);
    targets.push_back(t);
  }
  return analogy_consistency(embed_words(encoder, sources).cast<double>(),
                             embed_words(encoder, targets).cast<double>());
}

namespace {

// Dominant eigenpair of a symmetric PSD matrix.
std::pair<double, Eigen::VectorXd> power_iteration(const Eigen::MatrixXd& m) {
  const Eigen::Index n = m.rows();
  Rng rng(0x5eed);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = rng.normal();
  v.normalize();
  double lambda = 0.0;
  for (int iter = 0; iter < 100000; ++iter) {
    Eigen::VectorXd next = m * v;
    const double norm = next.norm();
    if (norm < 1e-300) return {0.0, v};
    next /= norm;
    const double change = std::min((next - v).norm(), (next + v).norm());
    v = next;
    lambda = v.dot(m * v);
    if (change < 1e-14) break;
  }
  return {lambda, v};
}

void canonicalize_sign(Eigen::VectorXd& v) {
  Eigen::Index arg = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (std::abs(v(i)) > std::abs(v(arg)) + 1e-12) arg = i;
  if (v(arg) < 0) v = -v;
}

}  // namespace

Pca2d pca_2d(const Eigen::MatrixXd& vectors) {
  if (vectors.rows() < 2) throw std::invalid_argument("pca_2d: need at least 2 vectors");
  const Eigen::RowVectorXd mean = vectors.colwise().mean();
  const Eigen::MatrixXd centered = vectors.rowwise() - mean;
  Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(vectors.rows());
  const double trace = cov.trace();

  Pca2d out;
  out.components = Eigen::MatrixXd::Zero(2, vectors.cols());
  double lambdas[2] = {0.0, 0.0};
  for (int axis = 0; axis < 2; ++axis) {
    if (trace <= 0.0) break;
    auto [lambda, v] = power_iteration(cov);
    if (lambda <= 1e-12 * trace) break;
    canonicalize_sign(v);
    lambdas[axis] = lambda;
    out.components.row(axis) = v.transpose();
    cov -= lambda * v * v.transpose();
  }
  out.rank_deficient = lambdas[1] == 0.0;
  for (int axis = 0; axis < 2; ++axis)
    out.explained_variance_ratio[axis] = trace > 0.0 ? lambdas[axis] / trace : 0.0;
  out.coordinates = centered * out.components.transpose();
  return out;
}

std::int64_t layer_flops_per_token(const StackShape& s, std::int64_t seq, std::int64_t cross_len) {
  const std::int64_t d = s.d_model;
  std::int64_t f = 2 * (4 * d * d) + 2 * (2 * seq * d) + 2 * (2 * d * s.d_ff);
  if (cross_len > 0) f += 2 * (4 * d * d) + 2 * (2 * cross_len * d);
  return f;
}

FlopsBreakdown flops_estimate(const CostModelInput& in) {
  FlopsBreakdown out;
  out.encoder = static_cast<std::int64_t>(in.encoder_passes) * in.encoder_seq_len *
                in.encoder.n_layers * layer_flops_per_token(in.encoder, in.encoder_seq_len);
  std::int64_t per_run = 0;
  for (int t = 0; t < in.decoder_steps; ++t)
    per_run += static_cast<std::int64_t>(in.decoder.n_layers) *
               layer_flops_per_token(in.decoder, in.decoder_initial_context + t,
                                     in.cross_attention_len);
  out.decoder = per_run * in.beam_width * in.decoder_runs;
  return out;
}

CostModelInput retrieval_glosser_workload() {
  CostModelInput in;
  in.encoder = {12, 768, 3072};
  in.decoder = {4, 512, 2048};
  in.encoder_passes = 8;
  in.encoder_seq_len = 16;
  in.decoder_runs = 8;
  in.decoder_steps = 3 + 1;
  in.decoder_initial_context = 2;
  in.cross_attention_len = 0;
  in.beam_width = 5;
  return in;
}

CostModelInput byte_seq2seq_workload() {
  CostModelInput in;
  in.encoder = {18, 1536, 3968};
  in.decoder = {6, 1536, 3968};
  in.encoder_passes = 1;
  in.encoder_seq_len = 112;
  in.decoder_runs = 1;
  in.decoder_steps = 128;
  in.decoder_initial_context = 1;
  in.cross_attention_len = 112;
  in.beam_width = 3;
  return in;
}

}  // namespace morphoglot
