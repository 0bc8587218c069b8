#include "seilab/sei.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "seilab/parallel.hpp"

namespace seilab::sei {

namespace {

using json = nlohmann::json;

Eigen::MatrixXd shrink(const Eigen::MatrixXd& s, double alpha) {
  const int d = static_cast<int>(s.rows());
  const double scale = s.trace() / d;
  return (1.0 - alpha) * s +
         alpha * scale * Eigen::MatrixXd::Identity(d, d);
}

}  // namespace

const char* to_string(ClassifierKind k) {
  switch (k) {
    case ClassifierKind::mda_gabor: return "mda_gabor";
    case ClassifierKind::mda_freq: return "mda_freq";
    case ClassifierKind::cnn_time: return "cnn_time";
    case ClassifierKind::cnn_freq: return "cnn_freq";
    case ClassifierKind::cnn_gabor: return "cnn_gabor";
  }
  return "?";
}

ClassifierKind classifier_from_string(const std::string& s) {
  if (s == "mda_gabor") return ClassifierKind::mda_gabor;
  if (s == "mda_freq") return ClassifierKind::mda_freq;
  if (s == "cnn_time") return ClassifierKind::cnn_time;
  if (s == "cnn_freq") return ClassifierKind::cnn_freq;
  if (s == "cnn_gabor") return ClassifierKind::cnn_gabor;
  throw validation_error("unknown classifier: " + s);
}

// ---------------------------------------------------------------------------
// MDA/ML
// ---------------------------------------------------------------------------

MdaModel mda_fit(const std::vector<std::vector<double>>& fingerprints,
                 const std::vector<int>& labels, int classes, double reg) {
  require(classes >= 2, "mda needs at least two classes");
  require(fingerprints.size() == labels.size(), "labels/fingerprints mismatch");
  require(!fingerprints.empty(), "mda: empty training set");
  const int d = static_cast<int>(fingerprints.front().size());
  require(d >= classes - 1, "feature dimension below C-1");

  std::vector<int> counts(static_cast<size_t>(classes), 0);
  for (int l : labels) {
    require(l >= 0 && l < classes, "label out of range");
    ++counts[static_cast<size_t>(l)];
  }
  for (int c : counts) require(c >= 2, "every class needs >= 2 samples");

  const int n = static_cast<int>(fingerprints.size());
  Eigen::MatrixXd x(n, d);
  for (int i = 0; i < n; ++i) {
    x.row(i) = Eigen::Map<const Eigen::VectorXd>(fingerprints[static_cast<size_t>(i)].data(), d);
  }

  Eigen::MatrixXd means = Eigen::MatrixXd::Zero(classes, d);
  for (int i = 0; i < n; ++i) means.row(labels[static_cast<size_t>(i)]) += x.row(i);
  for (int c = 0; c < classes; ++c) means.row(c) /= counts[static_cast<size_t>(c)];
  const Eigen::RowVectorXd global = x.colwise().mean();

  Eigen::MatrixXd sw = Eigen::MatrixXd::Zero(d, d);
  for (int i = 0; i < n; ++i) {
    const Eigen::RowVectorXd dev = x.row(i) - means.row(labels[static_cast<size_t>(i)]);
    sw.noalias() += dev.transpose() * dev;
  }
  Eigen::MatrixXd sb = Eigen::MatrixXd::Zero(d, d);
  for (int c = 0; c < classes; ++c) {
    const Eigen::RowVectorXd dev = means.row(c) - global;
    sb.noalias() += counts[static_cast<size_t>(c)] * dev.transpose() * dev;
  }
  sw = shrink(sw, reg);

  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> solver(sb, sw);
  if (solver.info() != Eigen::Success) {
    throw processing_error("mda: singular scatter unresolved by regularization");
  }

  MdaModel model;
  model.classes = classes;
  model.input_dim = d;
  const int proj = classes - 1;
  model.w.resize(d, proj);
  // eigenvalues ascend; take the top C-1 in decreasing order
  for (int j = 0; j < proj; ++j) {
    model.w.col(j) = solver.eigenvectors().col(d - 1 - j);
  }

  // per-class Gaussians in the projected space
  Eigen::MatrixXd z = x * model.w;
  std::vector<Eigen::MatrixXd> scatter(static_cast<size_t>(classes),
                                       Eigen::MatrixXd::Zero(proj, proj));
  Eigen::MatrixXd zmeans = Eigen::MatrixXd::Zero(classes, proj);
  for (int i = 0; i < n; ++i) zmeans.row(labels[static_cast<size_t>(i)]) += z.row(i);
  for (int c = 0; c < classes; ++c) zmeans.row(c) /= counts[static_cast<size_t>(c)];
  for (int i = 0; i < n; ++i) {
    const Eigen::RowVectorXd dev = z.row(i) - zmeans.row(labels[static_cast<size_t>(i)]);
    scatter[static_cast<size_t>(labels[static_cast<size_t>(i)])].noalias() += dev.transpose() * dev;
  }
  for (int c = 0; c < classes; ++c) {
    Eigen::MatrixXd cov = scatter[static_cast<size_t>(c)] / counts[static_cast<size_t>(c)];
    cov = shrink(cov, reg);
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) {
      throw processing_error("mda: class covariance not positive definite");
    }
    const Eigen::MatrixXd l = llt.matrixL();
    double log_det = 0.0;
    for (int i = 0; i < proj; ++i) log_det += 2.0 * std::log(l(i, i));
    model.class_means.push_back(zmeans.row(c).transpose());
    model.class_covs.push_back(cov);
    model.class_precisions.push_back(llt.solve(Eigen::MatrixXd::Identity(proj, proj)));
    model.class_log_dets.push_back(log_det);
  }
  return model;
}

std::pair<int, std::vector<double>> mda_ml_classify(
    const MdaModel& model, std::span<const double> fingerprint) {
  require(static_cast<int>(fingerprint.size()) == model.input_dim,
          "fingerprint dimension mismatch");
  const Eigen::VectorXd z =
      model.w.transpose() *
      Eigen::Map<const Eigen::VectorXd>(fingerprint.data(), model.input_dim);

  const int proj = model.classes - 1;
  std::vector<double> ll(static_cast<size_t>(model.classes));
  int best = 0;
  for (int c = 0; c < model.classes; ++c) {
    const Eigen::VectorXd dev = z - model.class_means[static_cast<size_t>(c)];
    const double maha = dev.dot(model.class_precisions[static_cast<size_t>(c)] * dev);
    ll[static_cast<size_t>(c)] = -0.5 * (maha + model.class_log_dets[static_cast<size_t>(c)] +
                                         proj * std::log(2.0 * M_PI));
    if (ll[static_cast<size_t>(c)] > ll[static_cast<size_t>(best)]) best = c;  // ties keep the lowest index
  }
  return {best, std::move(ll)};
}

void save_mda(const MdaModel& model, const std::string& path) {
  json j;
  j["classes"] = model.classes;
  j["input_dim"] = model.input_dim;
  j["proj_dim"] = model.classes - 1;
  j["layout"] = "w[d*proj] row-major, then per class: mean[proj], cov[proj*proj]";
  const std::string hdr = j.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out.good()) throw processing_error("cannot open for writing: " + path);
  const char magic[8] = {'S', 'E', 'I', 'M', 'D', 'A', '0', '1'};
  const std::uint32_t hlen = static_cast<std::uint32_t>(hdr.size());
  out.write(magic, 8);
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(hdr.data(), static_cast<std::streamsize>(hdr.size()));
  auto put = [&](const double* p, std::int64_t count) {
    out.write(reinterpret_cast<const char*>(p),
              static_cast<std::streamsize>(count * 8));
  };
  // Eigen is column-major; write explicit row-major for the descriptor
  const int proj = model.classes - 1;
  for (int r = 0; r < model.input_dim; ++r) {
    for (int c = 0; c < proj; ++c) {
      const double v = model.w(r, c);
      put(&v, 1);
    }
  }
  for (int c = 0; c < model.classes; ++c) {
    put(model.class_means[static_cast<size_t>(c)].data(), proj);
    for (int r = 0; r < proj; ++r) {
      for (int q = 0; q < proj; ++q) {
        const double v = model.class_covs[static_cast<size_t>(c)](r, q);
        put(&v, 1);
      }
    }
  }
  if (!out.good()) throw processing_error("mda write failed: " + path);
}

MdaModel load_mda(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.good()) throw processing_error("cannot open: " + path);
  char magic[8];
  in.read(magic, 8);
  require(in.good() && std::memcmp(magic, "SEIMDA01", 8) == 0,
          "not an mda model file");
  std::uint32_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string hdr(hlen, '\0');
  in.read(hdr.data(), hlen);
  const json j = json::parse(hdr);

  MdaModel model;
  model.classes = j.at("classes").get<int>();
  model.input_dim = j.at("input_dim").get<int>();
  const int proj = model.classes - 1;
  auto get = [&](double* p, std::int64_t count) {
    in.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(count * 8));
  };
  model.w.resize(model.input_dim, proj);
  for (int r = 0; r < model.input_dim; ++r) {
    for (int c = 0; c < proj; ++c) get(&model.w(r, c), 1);
  }
  for (int c = 0; c < model.classes; ++c) {
    Eigen::VectorXd mean(proj);
    get(mean.data(), proj);
    Eigen::MatrixXd cov(proj, proj);
    for (int r = 0; r < proj; ++r) {
      for (int q = 0; q < proj; ++q) get(&cov(r, q), 1);
    }
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    require(llt.info() == Eigen::Success, "stored covariance not PD");
    const Eigen::MatrixXd l = llt.matrixL();
    double log_det = 0.0;
    for (int i = 0; i < proj; ++i) log_det += 2.0 * std::log(l(i, i));
    model.class_means.push_back(std::move(mean));
    model.class_covs.push_back(cov);
    model.class_precisions.push_back(llt.solve(Eigen::MatrixXd::Identity(proj, proj)));
    model.class_log_dets.push_back(log_det);
  }
  if (!in.good()) throw processing_error("mda model truncated: " + path);
  return model;
}

// ---------------------------------------------------------------------------
// CNN SEI
// ---------------------------------------------------------------------------

nn::Network build_sei_cnn(const SeiCnnConfig& cfg, std::uint64_t seed) {
  require(cfg.output_cells == 8 || cfg.output_cells == 9,
          "sei cnn has 8 cells, or 9 with a decoy");
  using nn::Activation;
  using nn::LayerSpec;
  if (cfg.representation == Representation::gabor_image) {
    return nn::Network(
        {3, 320, 320},
        {LayerSpec::Conv2d(8, {32, 32}), LayerSpec::BatchNorm(Activation::relu),
         LayerSpec::MaxPool({32, 32}, {32, 32}),
         LayerSpec::Conv2d(16, {32, 32}), LayerSpec::BatchNorm(Activation::relu),
         LayerSpec::MaxPool({32, 32}, {32, 32}),
         LayerSpec::Conv2d(32, {32, 32}), LayerSpec::BatchNorm(Activation::relu),
         LayerSpec::MaxPool({32, 32}, {32, 32}), LayerSpec::Flatten(),
         LayerSpec::Dense(cfg.output_cells, Activation::softmax)},
        seed);
  }
  return nn::Network(
      {1, 4, 320},
      {LayerSpec::Conv2d(40, {4, 4}), LayerSpec::BatchNorm(Activation::relu),
       LayerSpec::MaxPool({4, 4}, {4, 4}),
       LayerSpec::Conv2d(80, {4, 4}), LayerSpec::BatchNorm(Activation::relu),
       LayerSpec::MaxPool({1, 1}, {4, 4}),
       LayerSpec::Conv2d(160, {4, 4}), LayerSpec::BatchNorm(Activation::relu),
       LayerSpec::Flatten(),
       LayerSpec::Dense(cfg.output_cells, Activation::softmax)},
      seed);
}

namespace {

Representation representation_of(ClassifierKind kind) {
  switch (kind) {
    case ClassifierKind::cnn_time: return Representation::time;
    case ClassifierKind::cnn_freq: return Representation::frequency;
    case ClassifierKind::cnn_gabor: return Representation::gabor_image;
    default: throw validation_error("not a cnn classifier");
  }
}

std::vector<double> cnn_input_vector(Representation rep,
                                     std::span<const cplx> signal) {
  switch (rep) {
    case Representation::time:
      return features::scaled_time_tensor(signal);
    case Representation::frequency:
      return features::scaled_freq_tensor(signal);
    case Representation::gabor_image: {
      const auto img = features::gabor_image(features::gabor_surface(signal));
      // HWC -> CHW
      std::vector<double> chw(img.pixels.size());
      const int hw = kPreambleLen * kPreambleLen;
      for (int p = 0; p < hw; ++p) {
        for (int c = 0; c < 3; ++c) {
          chw[static_cast<size_t>(c) * hw + p] = img.pixels[static_cast<size_t>(3 * p + c)];
        }
      }
      return chw;
    }
  }
  throw validation_error("bad representation");
}

std::vector<int> cnn_input_shape(Representation rep) {
  return rep == Representation::gabor_image ? std::vector<int>{3, 320, 320}
                                            : std::vector<int>{1, 4, 320};
}

}  // namespace

std::vector<double> representation_vector(ClassifierKind kind,
                                          std::span<const cplx> signal) {
  switch (kind) {
    case ClassifierKind::mda_gabor:
      return features::gabor_fingerprint(signal).stats;
    case ClassifierKind::mda_freq:
      return features::scaled_freq_tensor(signal);
    default:
      return cnn_input_vector(representation_of(kind), signal);
  }
}

SeiClassifier SeiClassifier::fit(ClassifierKind kind, const LabeledSet& train,
                                 const config::LabConfig& cfg,
                                 std::uint64_t seed) {
  require(!train.signals.empty(), "empty training set");
  require(train.signals.size() == train.labels.size(), "labels mismatch");
  const int classes = static_cast<int>(train.class_names.size());

  SeiClassifier clf;
  clf.kind_ = kind;
  clf.class_names_ = train.class_names;

  if (kind == ClassifierKind::mda_gabor || kind == ClassifierKind::mda_freq) {
    std::vector<std::vector<double>> fps(train.signals.size());
    parallel::parallel_for(static_cast<std::int64_t>(train.signals.size()),
                           [&](std::int64_t i) {
                             fps[static_cast<size_t>(i)] = representation_vector(
                                 kind, train.signals[static_cast<size_t>(i)]);
                           });
    clf.mda_ = mda_fit(fps, train.labels, classes);
    return clf;
  }

  const Representation rep = representation_of(kind);
  SeiCnnConfig net_cfg{rep, classes};
  auto net = std::make_shared<nn::Network>(build_sei_cnn(net_cfg, seed));

  const std::vector<int> per_sample = cnn_input_shape(rep);
  const std::int64_t row = nn::Tensor::numel_of(per_sample);
  std::vector<int> batch_shape = per_sample;
  batch_shape.insert(batch_shape.begin(), static_cast<int>(train.signals.size()));
  nn::Tensor x(batch_shape);
  parallel::parallel_for(static_cast<std::int64_t>(train.signals.size()),
                         [&](std::int64_t i) {
                           const auto v = cnn_input_vector(rep, train.signals[static_cast<size_t>(i)]);
                           std::copy(v.begin(), v.end(), x.data.begin() + i * row);
                         });
  nn::Tensor y({static_cast<int>(train.labels.size()), classes});
  for (size_t i = 0; i < train.labels.size(); ++i) {
    y.data[i * static_cast<size_t>(classes) + static_cast<size_t>(train.labels[i])] = 1.0;
  }

  nn::TrainConfig tc = cfg.training.sei_cnn;
  tc.seed = derive_seed(seed, 0x747261696eULL);
  if (rep == Representation::gabor_image) {
    tc.epochs = cfg.training.gabor_epochs;
    tc.minibatch = std::min(tc.minibatch, 8);  // image batches are large
  }
  nn::train(*net, x, y, nn::LossKind::cce, tc);
  clf.net_ = std::move(net);
  return clf;
}

int SeiClassifier::classify(std::span<const cplx> signal) const {
  if (mda_) {
    return mda_ml_classify(*mda_, representation_vector(kind_, signal)).first;
  }
  const Representation rep = representation_of(kind_);
  const auto v = cnn_input_vector(rep, signal);
  std::vector<int> shape = cnn_input_shape(rep);
  shape.insert(shape.begin(), 1);
  nn::Tensor x(shape);
  std::copy(v.begin(), v.end(), x.data.begin());
  const nn::Tensor out = const_cast<nn::Network&>(*net_).forward(x, false);
  int best = 0;
  for (int c = 1; c < static_cast<int>(out.data.size()); ++c) {
    if (out.data[static_cast<size_t>(c)] > out.data[static_cast<size_t>(best)]) best = c;
  }
  return best;
}

std::vector<double> SeiClassifier::feature_vector(
    std::span<const cplx> signal) const {
  return representation_vector(kind_, signal);
}

bool SeiClassifier::has_decoy() const { return decoy_class() >= 0; }

int SeiClassifier::decoy_class() const {
  for (size_t i = 0; i < class_names_.size(); ++i) {
    if (class_names_[i] == "decoy") return static_cast<int>(i);
  }
  return -1;
}

// ---------------------------------------------------------------------------
// DAE
// ---------------------------------------------------------------------------

DaeModel train_dae(const std::vector<std::pair<cvec, cvec>>& pairs,
                   const config::DaeSection& cfg, std::uint64_t seed) {
  require(!pairs.empty(), "dae: no training pairs");
  const int n = static_cast<int>(pairs.size());
  const int dim = 4 * kPreambleLen;

  nn::Tensor x({n, dim}), y({n, dim});
  parallel::parallel_for(n, [&](std::int64_t i) {
    const auto noisy = features::scaled_time_tensor(pairs[static_cast<size_t>(i)].first);
    const auto clean = features::scaled_time_tensor(pairs[static_cast<size_t>(i)].second);
    std::copy(noisy.begin(), noisy.end(), x.data.begin() + i * dim);
    std::copy(clean.begin(), clean.end(), y.data.begin() + i * dim);
  });

  auto net = std::make_shared<nn::Network>(
      std::vector<int>{dim},
      std::vector<nn::LayerSpec>{
          nn::LayerSpec::Dense(cfg.hidden, nn::Activation::sigmoid),
          nn::LayerSpec::Dense(dim, nn::Activation::sigmoid)},
      seed);

  nn::TrainConfig tc;
  tc.learning_rate = cfg.learning_rate;
  tc.epochs = cfg.epochs;
  tc.minibatch = cfg.minibatch;
  tc.l2 = 0.0;
  tc.grad_clip = 5.0;
  tc.seed = derive_seed(seed, 0x646165ULL);
  nn::train(*net, x, y, nn::LossKind::mse, tc);
  return DaeModel{std::move(net)};
}

std::vector<double> dae_denoise_tensor(const DaeModel& model,
                                       std::span<const double> scaled) {
  require(scaled.size() == 4 * static_cast<size_t>(kPreambleLen),
          "dae expects a flattened 4x320 tensor");
  nn::Tensor x({1, static_cast<int>(scaled.size())});
  std::copy(scaled.begin(), scaled.end(), x.data.begin());
  const nn::Tensor out = model.net->forward(x, false);
  return out.data;
}

cvec dae_denoise(const DaeModel& model, std::span<const cplx> preamble) {
  const auto scaled = features::scaled_time_tensor(preamble);
  const auto denoised = dae_denoise_tensor(model, scaled);
  return pipeline::energy_normalize(features::complex_from_scaled_iq(denoised));
}

// ---------------------------------------------------------------------------
// authentication
// ---------------------------------------------------------------------------

const char* to_string(Outcome o) {
  switch (o) {
    case Outcome::true_accept: return "true_accept";
    case Outcome::false_reject: return "false_reject";
    case Outcome::false_accept: return "false_accept";
    case Outcome::true_reject: return "true_reject";
    case Outcome::other_reject: return "other_reject";
  }
  return "?";
}

AuthDecision authenticate(const std::string& claimed_id,
                          const pipeline::Preamble& signal,
                          const SeiClassifier& model, DefenseKind defense,
                          const DaeModel* dae) {
  const auto& names = model.class_names();
  const bool claim_known =
      std::find(names.begin(), names.end(), claimed_id) != names.end();
  require(claim_known, "unknown claimed identity: " + claimed_id);
  require(signal.emitter_id.has_value(),
          "signal lacks ground-truth provenance");

  cvec conditioned;
  std::span<const cplx> input = signal.samples;
  if (defense == DefenseKind::dae) {
    require(dae != nullptr, "dae defense selected but no model given");
    conditioned = dae_denoise(*dae, signal.samples);
    input = conditioned;
  }

  const int predicted = model.classify(input);
  const std::string& predicted_id = names[static_cast<size_t>(predicted)];

  const std::string& truth = *signal.emitter_id;
  const bool source_authorized =
      std::find(names.begin(), names.end(), truth) != names.end() &&
      truth != "decoy";

  Outcome outcome;
  if (predicted_id == claimed_id) {
    outcome = source_authorized ? Outcome::true_accept : Outcome::false_accept;
  } else if (source_authorized) {
    outcome = Outcome::false_reject;
  } else {
    outcome = predicted == model.decoy_class() ? Outcome::true_reject
                                               : Outcome::other_reject;
  }
  return {claimed_id, predicted_id, outcome};
}

}  // namespace seilab::sei
