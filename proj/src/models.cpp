#include "fedgen/models.hpp"

#include <filesystem>
#include <nlohmann/json.hpp>

#include "fedgen/io_util.hpp"

namespace fedgen {

namespace fs = std::filesystem;
using nlohmann::json;

Family parse_family(const std::string& s) {
    if (s == "lstm_vae") return Family::LstmVae;
    if (s == "tano_wgan") return Family::TanoWgan;
    if (s == "fedsw_tsad") return Family::FedswTsad;
    if (s == "tano_ddpm") return Family::TanoDdpm;
    throw std::invalid_argument("unknown model family: " + s);
}

std::string family_name(Family f) {
    switch (f) {
        case Family::LstmVae: return "lstm_vae";
        case Family::TanoWgan: return "tano_wgan";
        case Family::FedswTsad: return "fedsw_tsad";
        case Family::TanoDdpm: return "tano_ddpm";
    }
    throw std::logic_error("bad family");
}

SharePolicy parse_policy(const std::string& s) {
    if (s == "full") return SharePolicy::Full;
    if (s == "analysis") return SharePolicy::AnalysisOnly;
    if (s == "synthesis") return SharePolicy::SynthesisOnly;
    if (s == "independent") return SharePolicy::Independent;
    throw std::invalid_argument("unknown share policy: " + s);
}

std::string policy_name(SharePolicy p) {
    switch (p) {
        case SharePolicy::Full: return "full";
        case SharePolicy::AnalysisOnly: return "analysis";
        case SharePolicy::SynthesisOnly: return "synthesis";
        case SharePolicy::Independent: return "independent";
    }
    throw std::logic_error("bad policy");
}

std::vector<std::string> shared_names(const ParamPartition& part, SharePolicy policy) {
    std::vector<std::string> out;
    switch (policy) {
        case SharePolicy::Full:
            out = part.analysis;
            out.insert(out.end(), part.synthesis.begin(), part.synthesis.end());
            out.insert(out.end(), part.auxiliary.begin(), part.auxiliary.end());
            break;
        case SharePolicy::AnalysisOnly: out = part.analysis; break;
        case SharePolicy::SynthesisOnly: out = part.synthesis; break;
        case SharePolicy::Independent: break;
    }
    return out;
}

// ---- config json ----------------------------------------------------------

void to_json(json& j, const VaeConfig& c) {
    j = json{{"sensors", c.sensors},     {"window", c.window}, {"enc_sizes", c.enc_sizes},
             {"latent", c.latent},       {"dec_sizes", c.dec_sizes}};
}
void from_json(const json& j, VaeConfig& c) {
    c = VaeConfig{};
    j.at("sensors").get_to(c.sensors);
    j.at("window").get_to(c.window);
    j.at("enc_sizes").get_to(c.enc_sizes);
    j.at("latent").get_to(c.latent);
    j.at("dec_sizes").get_to(c.dec_sizes);
}

void to_json(json& j, const WganConfig& c) {
    j = json{{"sensors", c.sensors},
             {"window", c.window},
             {"critic_sizes", c.critic_sizes},
             {"gen_sizes", c.gen_sizes},
             {"latent", c.latent},
             {"gp_lambda", c.gp_lambda},
             {"gamma_score", c.gamma_score},
             {"inversion_steps", c.inversion_steps},
             {"inversion_lr", c.inversion_lr},
             {"critic_updates_per_gen", c.critic_updates_per_gen}};
}
void from_json(const json& j, WganConfig& c) {
    c = WganConfig{};
    j.at("sensors").get_to(c.sensors);
    j.at("window").get_to(c.window);
    j.at("critic_sizes").get_to(c.critic_sizes);
    j.at("gen_sizes").get_to(c.gen_sizes);
    j.at("latent").get_to(c.latent);
    j.at("gp_lambda").get_to(c.gp_lambda);
    j.at("gamma_score").get_to(c.gamma_score);
    j.at("inversion_steps").get_to(c.inversion_steps);
    j.at("inversion_lr").get_to(c.inversion_lr);
    j.at("critic_updates_per_gen").get_to(c.critic_updates_per_gen);
}

void to_json(json& j, const DdpmConfig& c) {
    j = json{{"sensors", c.sensors}, {"window", c.window}, {"channels", c.channels},
             {"time_dim", c.time_dim}, {"t_diff", c.t_diff}, {"beta0", c.beta0},
             {"beta_t", c.beta_t},   {"t_star", c.t_star}, {"pad_to", c.pad_to}};
}
void from_json(const json& j, DdpmConfig& c) {
    c = DdpmConfig{};
    j.at("sensors").get_to(c.sensors);
    j.at("window").get_to(c.window);
    j.at("channels").get_to(c.channels);
    j.at("time_dim").get_to(c.time_dim);
    j.at("t_diff").get_to(c.t_diff);
    j.at("beta0").get_to(c.beta0);
    j.at("beta_t").get_to(c.beta_t);
    j.at("t_star").get_to(c.t_star);
    j.at("pad_to").get_to(c.pad_to);
}

void to_json(json& j, const FedswConfig& c) {
    j = json{{"sensors", c.sensors},
             {"window", c.window},
             {"cond_len", c.cond_len},
             {"gen_hidden", c.gen_hidden},
             {"gen_kernel", c.gen_kernel},
             {"gen_dilations", c.gen_dilations},
             {"gen_dropout", c.gen_dropout},
             {"disc_hidden", c.disc_hidden},
             {"disc_dropout", c.disc_dropout},
             {"pred_embed", c.pred_embed},
             {"pred_hidden", c.pred_hidden},
             {"pred_dropout", c.pred_dropout},
             {"gp_lambda", c.gp_lambda},
             {"adv_weight", c.adv_weight},
             {"alpha", c.alpha},
             {"beta", c.beta},
             {"gamma", c.gamma},
             {"critic_updates_per_gen", c.critic_updates_per_gen}};
}
void from_json(const json& j, FedswConfig& c) {
    c = FedswConfig{};
    j.at("sensors").get_to(c.sensors);
    j.at("window").get_to(c.window);
    j.at("cond_len").get_to(c.cond_len);
    j.at("gen_hidden").get_to(c.gen_hidden);
    j.at("gen_kernel").get_to(c.gen_kernel);
    j.at("gen_dilations").get_to(c.gen_dilations);
    j.at("gen_dropout").get_to(c.gen_dropout);
    j.at("disc_hidden").get_to(c.disc_hidden);
    j.at("disc_dropout").get_to(c.disc_dropout);
    j.at("pred_embed").get_to(c.pred_embed);
    j.at("pred_hidden").get_to(c.pred_hidden);
    j.at("pred_dropout").get_to(c.pred_dropout);
    j.at("gp_lambda").get_to(c.gp_lambda);
    j.at("adv_weight").get_to(c.adv_weight);
    j.at("alpha").get_to(c.alpha);
    j.at("beta").get_to(c.beta);
    j.at("gamma").get_to(c.gamma);
    j.at("critic_updates_per_gen").get_to(c.critic_updates_per_gen);
}

json default_model_config(Family fam) {
    json j;
    switch (fam) {
        case Family::LstmVae: to_json(j, VaeConfig{}); break;
        case Family::TanoWgan: to_json(j, WganConfig{}); break;
        case Family::TanoDdpm: to_json(j, DdpmConfig{}); break;
        case Family::FedswTsad: to_json(j, FedswConfig{}); break;
    }
    return j;
}

// ---- AnyModel -------------------------------------------------------------

AnyModel::AnyModel(Family fam, const json& config, double lr, std::uint64_t seed)
    : family_(fam) {
    switch (fam) {
        case Family::LstmVae:
            model_ = std::make_unique<LstmVaeT<float>>(config.get<VaeConfig>(), lr, seed);
            break;
        case Family::TanoWgan:
            model_ = std::make_unique<TanoWganT<float>>(config.get<WganConfig>(), lr, seed);
            break;
        case Family::TanoDdpm:
            model_ = std::make_unique<TanoDdpmT<float>>(config.get<DdpmConfig>(), lr, seed);
            break;
        case Family::FedswTsad:
            model_ = std::make_unique<FedswT<float>>(config.get<FedswConfig>(), lr, seed);
            break;
    }
}

double AnyModel::train_batch(const MatF& packed, long B, Rng& rng) {
    return std::visit([&](auto& m) { return m->train_batch(packed, B, rng); }, model_);
}

std::vector<double> AnyModel::score_batch(const MatF& packed, long B, std::uint64_t seed) const {
    return std::visit([&](const auto& m) { return m->score_batch(packed, B, seed); }, model_);
}

ParamPartition AnyModel::partition() const {
    return std::visit([](const auto& m) { return m->partition(); }, model_);
}

ParamStoreF& AnyModel::params() {
    return std::visit([](auto& m) -> ParamStoreF& { return m->params(); }, model_);
}

const ParamStoreF& AnyModel::params() const {
    return std::visit([](const auto& m) -> const ParamStoreF& { return m->params(); }, model_);
}

json AnyModel::config_json() const {
    json j;
    std::visit([&](const auto& m) { to_json(j, m->config()); }, model_);
    return j;
}

LstmVaeT<float>* AnyModel::as_vae() {
    auto* p = std::get_if<std::unique_ptr<LstmVaeT<float>>>(&model_);
    return p ? p->get() : nullptr;
}
TanoWganT<float>* AnyModel::as_wgan() {
    auto* p = std::get_if<std::unique_ptr<TanoWganT<float>>>(&model_);
    return p ? p->get() : nullptr;
}
TanoDdpmT<float>* AnyModel::as_ddpm() {
    auto* p = std::get_if<std::unique_ptr<TanoDdpmT<float>>>(&model_);
    return p ? p->get() : nullptr;
}
FedswT<float>* AnyModel::as_fedsw() {
    auto* p = std::get_if<std::unique_ptr<FedswT<float>>>(&model_);
    return p ? p->get() : nullptr;
}

// ---- checkpoints ----------------------------------------------------------

void save_checkpoint(const std::string& dir, const AnyModel& model, std::uint64_t seed) {
    fs::create_directories(dir);
    const auto& st = model.params();
    auto part = model.partition();
    json manifest;
    manifest["family"] = family_name(model.family());
    manifest["config"] = model.config_json();
    manifest["seed"] = seed;
    manifest["partition"] = {{"analysis", part.analysis},
                             {"synthesis", part.synthesis},
                             {"auxiliary", part.auxiliary}};
    json params = json::array();
    for (const auto& e : st.entries) {
        params.push_back({{"name", e.name}, {"rows", e.value.rows()}, {"cols", e.value.cols()}});
        std::vector<float> flat(static_cast<std::size_t>(e.value.size()));
        for (long r = 0; r < e.value.rows(); ++r)
            for (long c = 0; c < e.value.cols(); ++c)
                flat[static_cast<std::size_t>(r * e.value.cols() + c)] = e.value(r, c);
        write_f32_file(dir + "/" + e.name + ".bin", flat.data(), flat.size());
    }
    manifest["params"] = params;
    write_text_file(dir + "/manifest.json", manifest.dump(2) + "\n");
}

AnyModel load_checkpoint(const std::string& dir, double lr) {
    json manifest = json::parse(read_text_file(dir + "/manifest.json"));
    AnyModel model(parse_family(manifest.at("family").get<std::string>()), manifest.at("config"),
                   lr, manifest.at("seed").get<std::uint64_t>());
    auto& st = model.params();
    for (const auto& p : manifest.at("params")) {
        auto name = p.at("name").get<std::string>();
        long rows = p.at("rows").get<long>(), cols = p.at("cols").get<long>();
        auto flat = read_f32_file(dir + "/" + name + ".bin");
        if (static_cast<long>(flat.size()) != rows * cols)
            throw IoError("checkpoint size mismatch for " + name);
        auto& v = st.value(st.find(name));
        if (v.rows() != rows || v.cols() != cols)
            throw IoError("checkpoint shape mismatch for " + name);
        for (long r = 0; r < rows; ++r)
            for (long c = 0; c < cols; ++c)
                v(r, c) = flat[static_cast<std::size_t>(r * cols + c)];
    }
    return model;
}

}  // namespace fedgen
