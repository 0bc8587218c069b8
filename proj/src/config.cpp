#include "seilab/config.hpp"

#include <fstream>

#include <json.hpp>

namespace seilab::config {

namespace {

using json = nlohmann::json;

json profile_to_json(const sigmodel::EmitterProfile& p) {
  return json{{"emitter_id", p.emitter_id},
              {"iq_gain_imbalance_db", p.iq_gain_imbalance_db},
              {"iq_phase_imbalance_deg", p.iq_phase_imbalance_deg},
              {"cfo_hz", p.cfo_hz},
              {"dc_offset", {p.dc_offset.real(), p.dc_offset.imag()}},
              {"pa_a1", p.pa_a1},
              {"pa_a3", p.pa_a3},
              {"phase_noise_linewidth_hz", p.phase_noise_linewidth_hz}};
}

sigmodel::EmitterProfile profile_from_json(const json& j) {
  sigmodel::EmitterProfile p;
  p.emitter_id = j.at("emitter_id").get<std::string>();
  p.iq_gain_imbalance_db = j.at("iq_gain_imbalance_db").get<double>();
  p.iq_phase_imbalance_deg = j.at("iq_phase_imbalance_deg").get<double>();
  p.cfo_hz = j.at("cfo_hz").get<double>();
  const auto dc = j.at("dc_offset").get<std::vector<double>>();
  require(dc.size() == 2, "dc_offset must be [re, im]");
  p.dc_offset = cplx(dc[0], dc[1]);
  p.pa_a1 = j.at("pa_a1").get<double>();
  p.pa_a3 = j.at("pa_a3").get<double>();
  p.phase_noise_linewidth_hz = j.at("phase_noise_linewidth_hz").get<double>();
  return p;
}

json train_to_json(const nn::TrainConfig& t) {
  return json{{"learning_rate", t.learning_rate}, {"grad_clip", t.grad_clip},
              {"l2", t.l2},                       {"epochs", t.epochs},
              {"minibatch", t.minibatch},         {"seed", t.seed}};
}

nn::TrainConfig train_from_json(const json& j) {
  nn::TrainConfig t;
  t.learning_rate = j.at("learning_rate").get<double>();
  t.grad_clip = j.at("grad_clip").get<double>();
  t.l2 = j.at("l2").get<double>();
  t.epochs = j.at("epochs").get<int>();
  t.minibatch = j.at("minibatch").get<int>();
  t.seed = j.at("seed").get<std::uint64_t>();
  return t;
}

}  // namespace

void LabConfig::validate() const {
  require(!emitters.empty(), "config needs at least one emitter");
  for (const auto& e : emitters) e.validate();
  decoy.validate();
  eve_frontend.validate();
  require(pipeline.threshold_fraction > 0.0 && pipeline.threshold_fraction < 1.0,
          "threshold_fraction out of range");
  require(synthesis.count_per_emitter >= 1, "count_per_emitter must be >= 1");
  training.sei_cnn.validate();

  // the shipped set must stay separable or downstream classification is
  // ill-posed
  for (size_t i = 0; i < emitters.size(); ++i) {
    for (size_t j = i + 1; j < emitters.size(); ++j) {
      const double d = sigmodel::profile_distance(emitters[i], emitters[j]);
      require(d >= min_profile_distance,
              "emitter profiles " + emitters[i].emitter_id + " and " +
                  emitters[j].emitter_id + " are closer than the configured minimum");
    }
  }
}

LabConfig default_config() {
  LabConfig cfg;
  cfg.emitters = sigmodel::default_emitter_set();
  cfg.decoy = sigmodel::default_decoy_profile();
  cfg.eve_frontend = sigmodel::default_eve_profile();
  cfg.synthesis.count_per_emitter = 1000;
  cfg.training.sei_cnn.epochs = 40;  // desk-scale; the reference setup is 100
  cfg.training.sei_cnn.minibatch = 250;
  return cfg;
}

std::string config_to_json(const LabConfig& cfg) {
  json j;
  json emitters = json::array();
  for (const auto& e : cfg.emitters) emitters.push_back(profile_to_json(e));
  j["emitters"] = emitters;
  j["decoy"] = profile_to_json(cfg.decoy);
  j["eve_frontend"] = profile_to_json(cfg.eve_frontend);
  j["pipeline"] = {{"threshold_fraction", cfg.pipeline.threshold_fraction},
                   {"detect_window", cfg.pipeline.detect_window},
                   {"corr_floor", cfg.pipeline.corr_floor},
                   {"filter",
                    {{"order", cfg.pipeline.filter.order},
                     {"passband_ripple_db", cfg.pipeline.filter.passband_ripple_db},
                     {"stopband_atten_db", cfg.pipeline.filter.stopband_atten_db},
                     {"cutoff_hz", cfg.pipeline.filter.cutoff_hz}}}};
  j["synthesis"] = {{"count_per_emitter", cfg.synthesis.count_per_emitter},
                    {"snr_db", cfg.synthesis.snr_db},
                    {"record_len", cfg.synthesis.frame.record_len},
                    {"min_offset", cfg.synthesis.frame.min_offset},
                    {"max_offset", cfg.synthesis.frame.max_offset},
                    {"min_payload_symbols", cfg.synthesis.frame.min_payload_symbols},
                    {"max_payload_symbols", cfg.synthesis.frame.max_payload_symbols}};
  j["training"] = {
      {"sei_cnn", train_to_json(cfg.training.sei_cnn)},
      {"gabor_epochs", cfg.training.gabor_epochs},
      {"ae",
       {{"hidden", cfg.training.ae.hidden},
        {"target_mse", cfg.training.ae.target_mse},
        {"max_epochs", cfg.training.ae.max_epochs},
        {"learning_rate", cfg.training.ae.learning_rate},
        {"minibatch", cfg.training.ae.minibatch}}},
      {"gan",
       {{"epochs", cfg.training.gan.epochs},
        {"minibatch", cfg.training.gan.minibatch},
        {"learning_rate", cfg.training.gan.learning_rate}}},
      {"dae",
       {{"hidden", cfg.training.dae.hidden},
        {"epochs", cfg.training.dae.epochs},
        {"minibatch", cfg.training.dae.minibatch},
        {"learning_rate", cfg.training.dae.learning_rate}}}};
  j["run"] = {{"train_per_emitter", cfg.run.train_per_emitter},
              {"test_per_emitter", cfg.run.test_per_emitter},
              {"eve_transmissions", cfg.run.eve_transmissions},
              {"mimic_target", cfg.run.mimic_target}};
  j["min_profile_distance"] = cfg.min_profile_distance;
  return j.dump(2);
}

LabConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw validation_error(std::string("config parse error: ") + e.what());
  }
  LabConfig cfg = default_config();
  try {
    if (j.contains("emitters")) {
      cfg.emitters.clear();
      for (const auto& e : j.at("emitters")) {
        cfg.emitters.push_back(profile_from_json(e));
      }
    }
    if (j.contains("decoy")) cfg.decoy = profile_from_json(j.at("decoy"));
    if (j.contains("eve_frontend")) {
      cfg.eve_frontend = profile_from_json(j.at("eve_frontend"));
    }
    if (j.contains("pipeline")) {
      const auto& p = j.at("pipeline");
      cfg.pipeline.threshold_fraction = p.value("threshold_fraction", cfg.pipeline.threshold_fraction);
      cfg.pipeline.detect_window = p.value("detect_window", cfg.pipeline.detect_window);
      cfg.pipeline.corr_floor = p.value("corr_floor", cfg.pipeline.corr_floor);
      if (p.contains("filter")) {
        const auto& f = p.at("filter");
        cfg.pipeline.filter.order = f.value("order", cfg.pipeline.filter.order);
        cfg.pipeline.filter.passband_ripple_db =
            f.value("passband_ripple_db", cfg.pipeline.filter.passband_ripple_db);
        cfg.pipeline.filter.stopband_atten_db =
            f.value("stopband_atten_db", cfg.pipeline.filter.stopband_atten_db);
        cfg.pipeline.filter.cutoff_hz = f.value("cutoff_hz", cfg.pipeline.filter.cutoff_hz);
      }
    }
    if (j.contains("synthesis")) {
      const auto& s = j.at("synthesis");
      cfg.synthesis.count_per_emitter = s.value("count_per_emitter", cfg.synthesis.count_per_emitter);
      cfg.synthesis.snr_db = s.value("snr_db", cfg.synthesis.snr_db);
      cfg.synthesis.frame.record_len = s.value("record_len", cfg.synthesis.frame.record_len);
      cfg.synthesis.frame.min_offset = s.value("min_offset", cfg.synthesis.frame.min_offset);
      cfg.synthesis.frame.max_offset = s.value("max_offset", cfg.synthesis.frame.max_offset);
      cfg.synthesis.frame.min_payload_symbols =
          s.value("min_payload_symbols", cfg.synthesis.frame.min_payload_symbols);
      cfg.synthesis.frame.max_payload_symbols =
          s.value("max_payload_symbols", cfg.synthesis.frame.max_payload_symbols);
    }
    if (j.contains("training")) {
      const auto& t = j.at("training");
      if (t.contains("sei_cnn")) cfg.training.sei_cnn = train_from_json(t.at("sei_cnn"));
      cfg.training.gabor_epochs = t.value("gabor_epochs", cfg.training.gabor_epochs);
      if (t.contains("ae")) {
        const auto& a = t.at("ae");
        cfg.training.ae.hidden = a.value("hidden", cfg.training.ae.hidden);
        cfg.training.ae.target_mse = a.value("target_mse", cfg.training.ae.target_mse);
        cfg.training.ae.max_epochs = a.value("max_epochs", cfg.training.ae.max_epochs);
        cfg.training.ae.learning_rate = a.value("learning_rate", cfg.training.ae.learning_rate);
        cfg.training.ae.minibatch = a.value("minibatch", cfg.training.ae.minibatch);
      }
      if (t.contains("gan")) {
        const auto& g = t.at("gan");
        cfg.training.gan.epochs = g.value("epochs", cfg.training.gan.epochs);
        cfg.training.gan.minibatch = g.value("minibatch", cfg.training.gan.minibatch);
        cfg.training.gan.learning_rate = g.value("learning_rate", cfg.training.gan.learning_rate);
      }
      if (t.contains("dae")) {
        const auto& d = t.at("dae");
        cfg.training.dae.hidden = d.value("hidden", cfg.training.dae.hidden);
        cfg.training.dae.epochs = d.value("epochs", cfg.training.dae.epochs);
        cfg.training.dae.minibatch = d.value("minibatch", cfg.training.dae.minibatch);
        cfg.training.dae.learning_rate = d.value("learning_rate", cfg.training.dae.learning_rate);
      }
    }
    if (j.contains("run")) {
      const auto& r = j.at("run");
      cfg.run.train_per_emitter = r.value("train_per_emitter", cfg.run.train_per_emitter);
      cfg.run.test_per_emitter = r.value("test_per_emitter", cfg.run.test_per_emitter);
      cfg.run.eve_transmissions = r.value("eve_transmissions", cfg.run.eve_transmissions);
      cfg.run.mimic_target = r.value("mimic_target", cfg.run.mimic_target);
    }
    cfg.min_profile_distance = j.value("min_profile_distance", cfg.min_profile_distance);
  } catch (const json::exception& e) {
    throw validation_error(std::string("config field error: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

LabConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) throw validation_error("cannot open config: " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return config_from_json(text);
}

void save_config(const LabConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out.good()) throw processing_error("cannot open for writing: " + path);
  out << config_to_json(cfg) << "\n";
}

}  // namespace seilab::config
