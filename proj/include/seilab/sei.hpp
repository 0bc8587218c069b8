#pragma once

#include <Eigen/Dense>

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "seilab/config.hpp"
#include "seilab/features.hpp"
#include "seilab/nn.hpp"
#include "seilab/pipeline.hpp"

namespace seilab::sei {

enum class Representation { time, frequency, gabor_image };
enum class ClassifierKind { mda_gabor, mda_freq, cnn_time, cnn_freq, cnn_gabor };
enum class DefenseKind { none, dae };

const char* to_string(ClassifierKind k);
ClassifierKind classifier_from_string(const std::string& s);

/// Labeled unit-energy 320-sample sequences (preambles or residuals).
struct LabeledSet {
  std::vector<cvec> signals;
  std::vector<int> labels;
  std::vector<std::string> class_names;
};

// ---- MDA/ML ----

/// Projection onto the (C-1)-dimensional discriminant subspace plus
/// per-class Gaussians fitted in that subspace. Eigenvectors are
/// within-scatter normalized and ordered by decreasing eigenvalue.
struct MdaModel {
  Eigen::MatrixXd w;  // D x (C-1)
  std::vector<Eigen::VectorXd> class_means;
  std::vector<Eigen::MatrixXd> class_covs;
  std::vector<Eigen::MatrixXd> class_precisions;
  std::vector<double> class_log_dets;
  int classes = 0;
  int input_dim = 0;
};

MdaModel mda_fit(const std::vector<std::vector<double>>& fingerprints,
                 const std::vector<int>& labels, int classes,
                 double reg = 1e-3);

/// argmax over class log-likelihoods, equal priors; ties break to the
/// lowest class index. Returns (label, per-class log-likelihoods).
std::pair<int, std::vector<double>> mda_ml_classify(
    const MdaModel& model, std::span<const double> fingerprint);

void save_mda(const MdaModel& model, const std::string& path);
MdaModel load_mda(const std::string& path);

// ---- CNN SEI ----

struct SeiCnnConfig {
  Representation representation = Representation::time;
  int output_cells = 8;  // 9 iff decoy training enabled
};

/// The SEI network: three convolution stages with batch normalization and
/// a softmax head of 8 or 9 cells.
nn::Network build_sei_cnn(const SeiCnnConfig& cfg, std::uint64_t seed);

/// One classifier facade over both families so the harness can swap them.
class SeiClassifier {
 public:
  static SeiClassifier fit(ClassifierKind kind, const LabeledSet& train,
                           const config::LabConfig& cfg, std::uint64_t seed);

  int classify(std::span<const cplx> signal) const;
  const std::vector<std::string>& class_names() const { return class_names_; }
  ClassifierKind kind() const { return kind_; }
  bool has_decoy() const;
  int decoy_class() const;  // -1 when absent

  /// Feature vector a signal maps to under this classifier's front end
  /// (fingerprint for MDA kinds, flattened scaled tensor for CNN kinds).
  std::vector<double> feature_vector(std::span<const cplx> signal) const;

 private:
  ClassifierKind kind_;
  std::vector<std::string> class_names_;
  std::optional<MdaModel> mda_;
  std::shared_ptr<nn::Network> net_;  // shared: classifiers are immutable
  friend struct SeiClassifierAccess;
};

/// Vectorization used by each classifier kind (also the fingerprint space
/// the attack-direction experiments measure distances in).
std::vector<double> representation_vector(ClassifierKind kind,
                                          std::span<const cplx> signal);

// ---- DAE defense ----

struct DaeModel {
  std::shared_ptr<nn::Network> net;  // 1280 -> hidden -> 1280, sigmoid
};

/// pairs: (9 dB preamble, matched 30 dB preamble of the same emitter).
DaeModel train_dae(const std::vector<std::pair<cvec, cvec>>& pairs,
                   const config::DaeSection& cfg, std::uint64_t seed);

/// Full-tensor inference; output shape equals input shape (1280).
std::vector<double> dae_denoise_tensor(const DaeModel& model,
                                       std::span<const double> scaled);
/// Denoised unit-energy preamble rebuilt from the (i, q) rows.
cvec dae_denoise(const DaeModel& model, std::span<const cplx> preamble);

// ---- authentication ----

enum class Outcome {
  true_accept,
  false_reject,
  false_accept,
  true_reject,
  other_reject,  // adversary rejected as a different authorized emitter
};

const char* to_string(Outcome o);

struct AuthDecision {
  std::string claimed_id;
  std::string predicted_id;
  Outcome outcome;
};

/// Classifies the signal (optionally DAE-denoised first) and maps the
/// prediction to an authentication outcome. The signal's emitter_id is the
/// simulation ground truth: a source outside the authorized set is the
/// adversary. Without a decoy class true_reject is unreachable by
/// construction.
AuthDecision authenticate(const std::string& claimed_id,
                          const pipeline::Preamble& signal,
                          const SeiClassifier& model,
                          DefenseKind defense = DefenseKind::none,
                          const DaeModel* dae = nullptr);

}  // namespace seilab::sei
