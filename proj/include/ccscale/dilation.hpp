#pragma once

#include <cmath>
#include <vector>

#include "ccscale/vector_field.hpp"

namespace ccscale {

struct DilationRequest {
    std::vector<double> delta;  // one entry per parameter, in (0,1]
    const FieldSystem* system = nullptr;
};

inline FieldSystem dilate(const FieldSystem& sys, const std::vector<double>& delta);

inline FieldSystem dilate(const DilationRequest& req) {
    if (!req.system) throw StructuralError("dilate: request carries no system");
    return dilate(*req.system, req.delta);
}

inline void check_delta(const std::vector<double>& delta, int nu) {
    if (static_cast<int>(delta.size()) != nu)
        throw StructuralError("delta must have one entry per parameter");
    for (double d : delta)
        if (!(d > 0.0 && d <= 1.0)) throw DomainError("delta components must lie in (0,1]");
}

/// delta^d = prod_mu delta_mu^{d_mu}
inline double delta_power(const std::vector<double>& delta, const std::vector<int>& d) {
    double p = 1.0;
    for (std::size_t mu = 0; mu < delta.size(); ++mu) p *= std::pow(delta[mu], d[mu]);
    return p;
}

/// The list delta^d X: field j scaled by delta^{d_j}; degrees preserved.
/// Structure coefficients transform as c^{l,delta} = delta^{d_j+d_k-d_l} c
/// when d_l <= d_j + d_k component-wise; a nonzero coefficient outside that
/// cone cannot be dilated and is an error.
inline FieldSystem dilate(const FieldSystem& sys, const std::vector<double>& delta) {
    check_delta(delta, sys.parameters());
    std::vector<WeightedField> fields = sys.fields;
    for (auto& wf : fields) wf.field = wf.field.scaled(delta_power(delta, wf.degree));

    std::optional<StructureMap> structure;
    if (sys.structure) {
        structure.emplace();
        const double scale = [&] {
            double s = 0.0;
            for (const auto& wf : sys.fields) s = std::max(s, wf.field.max_abs_coefficient());
            return std::max(s, 1.0);
        }();
        for (const auto& [key, c] : *sys.structure) {
            const auto [j, k, l] = key;
            std::vector<int> e = sys.degree(j);
            bool in_cone = true;
            for (std::size_t mu = 0; mu < e.size(); ++mu) {
                e[mu] += sys.degree(k)[mu] - sys.degree(l)[mu];
                in_cone = in_cone && e[mu] >= 0;
            }
            if (!in_cone) {
                if (c.max_abs_coefficient() > 1e-10 * scale)
                    throw DomainError(
                        "dilate: structure coefficient outside the degree cone; "
                        "refit with degree filtering");
                continue;
            }
            double p = 1.0;
            for (std::size_t mu = 0; mu < e.size(); ++mu) p *= std::pow(delta[mu], e[mu]);
            (*structure)[key] = c * p;
        }
    }
    return FieldSystem{std::move(fields), std::move(structure)};
}

} // namespace ccscale
