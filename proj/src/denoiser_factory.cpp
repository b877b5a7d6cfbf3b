// SPDX-License-Identifier: Apache-2.0
#include <sstream>

#include "edminvert/denoiser.hpp"
#include "edminvert/errors.hpp"
#include "edminvert/vslt.hpp"
#include "edminvert/wire.hpp"

namespace edminvert {

LatentTensor parse_channel_values(const std::string& text) {
    std::vector<float> values;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            values.push_back(std::stof(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ConfigError("cannot parse '" + item + "' as a real number in '" + text + "'");
        }
    }
    if (values.empty()) throw ConfigError("empty value list");
    const std::size_t n = values.size();
    return LatentTensor({1, n, 1, 1}, std::move(values));
}

namespace {

const std::string* find(const DenoiserSpec& spec, const std::string& key) {
    auto it = spec.params.find(key);
    return it == spec.params.end() ? nullptr : &it->second;
}

bool flag(const DenoiserSpec& spec, const std::string& key, bool fallback) {
    const std::string* v = find(spec, key);
    if (v == nullptr) return fallback;
    if (*v == "true" || *v == "1") return true;
    if (*v == "false" || *v == "0") return false;
    throw ConfigError("parameter " + key + " must be true or false, got '" + *v + "'");
}

double real(const DenoiserSpec& spec, const std::string& key, double fallback) {
    const std::string* v = find(spec, key);
    if (v == nullptr) return fallback;
    const LatentTensor t = parse_channel_values(*v);
    if (t.size() != 1) throw ConfigError("parameter " + key + " must be a single real");
    return t[0];
}

// Tensor parameter: `<key>_path` (VSLT) or `<key>` (real or per-channel list).
LatentTensor tensor_param(const DenoiserSpec& spec, const std::string& key, const Shape& working, float fallback) {
    LatentTensor t;
    if (const std::string* path = find(spec, key + "_path")) {
        t = load_tensor(*path);
    } else if (const std::string* v = find(spec, key)) {
        t = parse_channel_values(*v);
    } else {
        return LatentTensor::filled({1, 1, 1, 1}, fallback);
    }
    if (!broadcastable(t.shape(), working)) {
        throw ConfigError("parameter " + key + " of shape " + t.shape().str() + " does not broadcast to " +
                          working.str());
    }
    return t;
}

void reject_unknown(const DenoiserSpec& spec, std::initializer_list<const char*> allowed) {
    for (const auto& [key, value] : spec.params) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || key == a;
        if (!ok) throw ConfigError("unknown parameter '" + key + "' for denoiser " + to_string(spec.kind));
    }
}

}  // namespace

std::unique_ptr<Denoiser> make_denoiser(const DenoiserSpec& spec, const Shape& working, double sigma_data,
                                        const LatentTensor* default_x0) {
    switch (spec.kind) {
    case DenoiserKind::oracle_constant: {
        reject_unknown(spec, {"x0_ref"});
        LatentTensor ref;
        if (const std::string* path = find(spec, "x0_ref")) {
            ref = load_tensor(*path);
        } else if (default_x0 != nullptr) {
            ref = *default_x0;
        } else {
            throw ConfigError("oracle-constant denoiser needs x0_ref");
        }
        if (!broadcastable(ref.shape(), working)) {
            throw ConfigError("x0_ref shape " + ref.shape().str() + " does not match " + working.str());
        }
        return std::make_unique<OracleConstantDenoiser>(std::move(ref), sigma_data);
    }
    case DenoiserKind::iso_gaussian: {
        reject_unknown(spec, {"mu", "mu_path", "s", "conditioned"});
        return std::make_unique<IsoGaussianDenoiser>(tensor_param(spec, "mu", working, 0.0f), real(spec, "s", 1.0),
                                                     sigma_data, flag(spec, "conditioned", true));
    }
    case DenoiserKind::diag_gaussian: {
        reject_unknown(spec, {"mu", "mu_path", "s", "s_path", "fit", "conditioned"});
        const bool conditioned = flag(spec, "conditioned", true);
        if (const std::string* list = find(spec, "fit")) {
            if (find(spec, "mu") || find(spec, "mu_path") || find(spec, "s") || find(spec, "s_path")) {
                throw ConfigError("diag-gaussian: fit excludes mu/s parameters");
            }
            std::vector<LatentTensor> samples;
            std::stringstream ss(*list);
            std::string path;
            while (std::getline(ss, path, ',')) samples.push_back(load_tensor(path));
            DiagGaussianFit fit = fit_diag_gaussian(samples);
            return std::make_unique<DiagGaussianDenoiser>(std::move(fit.mu), std::move(fit.s), sigma_data,
                                                          conditioned);
        }
        return std::make_unique<DiagGaussianDenoiser>(tensor_param(spec, "mu", working, 0.0f),
                                                      tensor_param(spec, "s", working, 1.0f), sigma_data,
                                                      conditioned);
    }
    case DenoiserKind::affine_file: {
        reject_unknown(spec, {"scale_path", "offset_path"});
        const std::string* scale = find(spec, "scale_path");
        const std::string* offset = find(spec, "offset_path");
        if (scale == nullptr || offset == nullptr) {
            throw ConfigError("affine-file denoiser needs scale_path and offset_path");
        }
        LatentTensor a = load_tensor(*scale);
        LatentTensor b = load_tensor(*offset);
        if (!broadcastable(a.shape(), working) || !broadcastable(b.shape(), working)) {
            throw ConfigError("affine-file tensors " + a.shape().str() + " / " + b.shape().str() +
                              " do not match latent " + working.str());
        }
        return std::make_unique<AffineDenoiser>(std::move(a), std::move(b));
    }
    case DenoiserKind::external: {
        reject_unknown(spec, {"endpoint"});
        std::string endpoint = spec.endpoint;
        if (const std::string* e = find(spec, "endpoint")) endpoint = *e;
        if (endpoint.empty()) throw ConfigError("external denoiser needs an endpoint (host:port)");
        return std::make_unique<wire::ExternalDenoiser>(wire::Endpoint::parse(endpoint), spec.timeout_secs);
    }
    }
    throw ConfigError("unhandled denoiser kind");
}

}  // namespace edminvert
