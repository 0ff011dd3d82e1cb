#include "arf/config.hpp"

#include <set>

#include "arf/checkpoint.hpp"
#include "arf/errors.hpp"

namespace arf {

namespace {

// Reads the keys of one JSON object and remembers which were consumed so the
// rest can be reported as unknown.
class Section {
 public:
  Section(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + " must be a JSON object");
  }

  const Json* find(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void get(const char* key, std::size_t& out) {
    if (const Json* v = find(key)) {
      if (!v->is_number_unsigned()) throw type_error(key, "a non-negative integer");
      out = v->get<std::size_t>();
    }
  }
  void get(const char* key, double& out) {
    if (const Json* v = find(key)) {
      if (!v->is_number()) throw type_error(key, "a number");
      out = v->get<double>();
    }
  }
  void get(const char* key, bool& out) {
    if (const Json* v = find(key)) {
      if (!v->is_boolean()) throw type_error(key, "a boolean");
      out = v->get<bool>();
    }
  }
  bool get_string(const char* key, std::string& out) {
    if (const Json* v = find(key)) {
      if (!v->is_string()) throw type_error(key, "a string");
      out = v->get<std::string>();
      return true;
    }
    return false;
  }

  std::string path(const char* key) const { return path_ + "." + key; }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.contains(k)) throw ConfigError("unknown config key '" + path_ + "." + k + "'");
    }
  }

 private:
  ConfigError type_error(const char* key, const char* what) const {
    return ConfigError("config key '" + path(key) + "' must be " + what);
  }

  const Json& j_;
  std::string path_;
  std::set<std::string, std::less<>> seen_;
};

// Enum-like values given as strings; parse errors become ConfigError.
template <class F>
void get_parsed(Section& s, const char* key, F&& apply) {
  std::string text;
  if (!s.get_string(key, text)) return;
  try {
    apply(text);
  } catch (const Error& e) {
    throw ConfigError("config key '" + s.path(key) + "': " + e.what());
  }
}

void read_gen(Section& s, GenConfig& g) {
  s.get("n_id_classes", g.n_id_classes);
  s.get("n_zsl_classes", g.n_zsl_classes);
  s.get("n_domains", g.n_domains);
  s.get("d_latent", g.d_latent);
  s.get("d_img_raw", g.d_img_raw);
  s.get("d_txt_raw", g.d_txt_raw);
  s.get("pretrain_per_class", g.pretrain_per_class);
  s.get("finetune_per_class", g.finetune_per_class);
  s.get("test_per_class", g.test_per_class);
  s.get("candidate_pool_size", g.candidate_pool_size);
  s.get("sigma_img", g.sigma_img);
  s.get("sigma_txt", g.sigma_txt);
  s.get("context_bank_size", g.context_bank_size);
  s.get("context_strength", g.context_strength);
  s.get("contexts_per_caption", g.contexts_per_caption);
  s.get("image_context_strength", g.image_context_strength);
  s.get("template_offset_scale", g.template_offset_scale);
}

Json gen_fields(const GenConfig& g) {
  Json j;
  j["n_id_classes"] = g.n_id_classes;
  j["n_zsl_classes"] = g.n_zsl_classes;
  j["n_domains"] = g.n_domains;
  j["d_latent"] = g.d_latent;
  j["d_img_raw"] = g.d_img_raw;
  j["d_txt_raw"] = g.d_txt_raw;
  j["pretrain_per_class"] = g.pretrain_per_class;
  j["finetune_per_class"] = g.finetune_per_class;
  j["test_per_class"] = g.test_per_class;
  j["candidate_pool_size"] = g.candidate_pool_size;
  j["sigma_img"] = g.sigma_img;
  j["sigma_txt"] = g.sigma_txt;
  j["context_bank_size"] = g.context_bank_size;
  j["context_strength"] = g.context_strength;
  j["contexts_per_caption"] = g.contexts_per_caption;
  j["image_context_strength"] = g.image_context_strength;
  j["template_offset_scale"] = g.template_offset_scale;
  return j;
}

void read_optimizer(Section& s, TrainConfig& t) {
  s.get("batch_size", t.batch_size);
  s.get("epochs", t.epochs);
  s.get("learning_rate", t.learning_rate);
  s.get("weight_decay", t.weight_decay);
  s.get("tau_trainable", t.tau_trainable);
}

Json optimizer_fields(const TrainConfig& t) {
  Json j;
  j["batch_size"] = t.batch_size;
  j["epochs"] = t.epochs;
  j["learning_rate"] = t.learning_rate;
  j["weight_decay"] = t.weight_decay;
  j["tau_trainable"] = t.tau_trainable;
  return j;
}

void read_finetune(Section& s, TrainConfig& t) {
  read_optimizer(s, t);
  get_parsed(s, "losses", [&](const std::string& v) { t.enabled_losses = parse_loss_set(v); });
  if (const Json* w = s.find("loss_weights")) {
    Section ws(*w, s.path("loss_weights"));
    ws.get("cl", t.loss_weights.cl);
    ws.get("cap", t.loss_weights.cap);
    ws.get("ret", t.loss_weights.ret);
    ws.finish();
  }
  get_parsed(s, "anchor_layout", [&](const std::string& v) { t.anchor_layout = parse_anchor_layout(v); });
  get_parsed(s, "retrieval_mode",
             [&](const std::string& v) { t.retrieval_mode = parse_retrieval_mode(v); });
  s.get("retrieval_k", t.retrieval_k);
}

}  // namespace

std::string to_string(const SplitSelection& s) {
  std::string out;
  auto add = [&](bool on, const char* name) {
    if (!on) return;
    if (!out.empty()) out += ',';
    out += name;
  };
  add(s.id, "id");
  add(s.ds, "ds");
  add(s.zsl, "zsl");
  return out;
}

GenConfig RunConfig::gen_config() const {
  GenConfig g = gen;
  g.seed = seed;
  return g;
}

TrainConfig RunConfig::pretrain_config() const {
  TrainConfig t = pretrain;
  t.seed = seed;
  return t;
}

TrainConfig RunConfig::finetune_config() const {
  TrainConfig t = finetune;
  t.seed = seed;
  return t;
}

Json to_json(const GenConfig& cfg) {
  Json j = gen_fields(cfg);
  j["seed"] = cfg.seed;
  return j;
}

GenConfig gen_config_from_json(const Json& j) {
  GenConfig g;
  Section s(j, "gen");
  read_gen(s, g);
  std::uint64_t seed = 0;
  if (const Json* v = s.find("seed")) {
    if (!v->is_number_unsigned()) throw ConfigError("config key 'gen.seed' must be a non-negative integer");
    seed = v->get<std::uint64_t>();
  }
  g.seed = seed;
  s.finish();
  validate(g);
  return g;
}

Json to_json(const RunConfig& cfg) {
  Json j;
  j["seed"] = cfg.seed;
  j["gen"] = gen_fields(cfg.gen);
  j["model"] = Json{{"hidden", cfg.model.hidden},
                    {"embed_dim", cfg.model.embed_dim},
                    {"init_tau", cfg.model.init_tau}};
  j["pretrain"] = optimizer_fields(cfg.pretrain);
  Json ft = optimizer_fields(cfg.finetune);
  ft["losses"] = to_string(cfg.finetune.enabled_losses);
  ft["loss_weights"] = Json{{"cl", cfg.finetune.loss_weights.cl},
                            {"cap", cfg.finetune.loss_weights.cap},
                            {"ret", cfg.finetune.loss_weights.ret}};
  ft["anchor_layout"] = std::string(to_string(cfg.finetune.anchor_layout));
  ft["retrieval_mode"] = std::string(to_string(cfg.finetune.retrieval_mode));
  ft["retrieval_k"] = cfg.finetune.retrieval_k;
  j["finetune"] = std::move(ft);
  j["eval"] = Json{{"splits", to_string(cfg.eval.splits)}, {"strict_zsl", cfg.eval.strict_zsl}};
  j["ensemble"] = Json{{"alphas", cfg.alphas}};
  return j;
}

std::string dump_run_config(const RunConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

RunConfig parse_run_config(std::string_view text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig cfg;
  Section root(j, "config");
  if (const Json* v = root.find("seed")) {
    if (!v->is_number_unsigned()) throw ConfigError("config key 'seed' must be a non-negative integer");
    cfg.seed = v->get<std::uint64_t>();
  }
  if (const Json* v = root.find("gen")) {
    Section s(*v, "gen");
    read_gen(s, cfg.gen);
    s.finish();
  }
  if (const Json* v = root.find("model")) {
    Section s(*v, "model");
    s.get("hidden", cfg.model.hidden);
    s.get("embed_dim", cfg.model.embed_dim);
    s.get("init_tau", cfg.model.init_tau);
    s.finish();
  }
  if (const Json* v = root.find("pretrain")) {
    Section s(*v, "pretrain");
    read_optimizer(s, cfg.pretrain);
    s.finish();
  }
  if (const Json* v = root.find("finetune")) {
    Section s(*v, "finetune");
    read_finetune(s, cfg.finetune);
    s.finish();
  }
  if (const Json* v = root.find("eval")) {
    Section s(*v, "eval");
    get_parsed(s, "splits", [&](const std::string& t) { cfg.eval.splits = parse_split_selection(t); });
    s.get("strict_zsl", cfg.eval.strict_zsl);
    s.finish();
  }
  if (const Json* v = root.find("ensemble")) {
    Section s(*v, "ensemble");
    if (const Json* a = s.find("alphas")) {
      if (!a->is_array()) throw ConfigError("config key 'ensemble.alphas' must be an array");
      cfg.alphas.clear();
      for (const auto& x : *a) {
        if (!x.is_number()) throw ConfigError("config key 'ensemble.alphas' must hold numbers");
        cfg.alphas.push_back(x.get<double>());
      }
    }
    s.finish();
  }
  root.finish();

  validate(cfg.gen_config());
  validate(cfg.pretrain_config());
  validate(cfg.finetune_config());
  if (cfg.model.hidden == 0 || cfg.model.embed_dim == 0 || !(cfg.model.init_tau > 0.0)) {
    throw ConfigError("model needs hidden > 0, embed_dim > 0 and init_tau > 0");
  }
  if (!cfg.eval.splits.any()) throw ConfigError("eval.splits selects nothing");
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  return parse_run_config(read_file(path));
}

}  // namespace arf
