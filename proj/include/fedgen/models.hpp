#pragma once

// family-dispatched wrapper around the four model classes (float32 pipeline
// precision) plus the checkpoint format: a directory holding manifest.json
// and one little-endian float32 array file per named parameter.

#include <memory>
#include <nlohmann/json_fwd.hpp>
#include <variant>

#include "fedgen/models/fedsw.hpp"
#include "fedgen/models/lstm_vae.hpp"
#include "fedgen/models/tano_ddpm.hpp"
#include "fedgen/models/tano_wgan.hpp"

namespace fedgen {

using MatF = nn::MatT<float>;
using ParamStoreF = nn::ParamStoreT<float>;

void to_json(nlohmann::json& j, const VaeConfig& c);
void from_json(const nlohmann::json& j, VaeConfig& c);
void to_json(nlohmann::json& j, const WganConfig& c);
void from_json(const nlohmann::json& j, WganConfig& c);
void to_json(nlohmann::json& j, const DdpmConfig& c);
void from_json(const nlohmann::json& j, DdpmConfig& c);
void to_json(nlohmann::json& j, const FedswConfig& c);
void from_json(const nlohmann::json& j, FedswConfig& c);

class AnyModel {
public:
    AnyModel(Family fam, const nlohmann::json& config, double lr, std::uint64_t seed);

    Family family() const { return family_; }
    double train_batch(const MatF& packed, long B, Rng& rng);
    std::vector<double> score_batch(const MatF& packed, long B, std::uint64_t seed) const;
    ParamPartition partition() const;
    ParamStoreF& params();
    const ParamStoreF& params() const;
    nlohmann::json config_json() const;

    LstmVaeT<float>* as_vae();
    TanoWganT<float>* as_wgan();
    TanoDdpmT<float>* as_ddpm();
    FedswT<float>* as_fedsw();

private:
    Family family_;
    std::variant<std::unique_ptr<LstmVaeT<float>>, std::unique_ptr<TanoWganT<float>>,
                 std::unique_ptr<TanoDdpmT<float>>, std::unique_ptr<FedswT<float>>>
        model_;
};

// a family's default config as json
nlohmann::json default_model_config(Family fam);

void save_checkpoint(const std::string& dir, const AnyModel& model, std::uint64_t seed);
AnyModel load_checkpoint(const std::string& dir, double lr);

}  // namespace fedgen
