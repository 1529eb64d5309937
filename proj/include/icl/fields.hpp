#pragma once

#include "icl/numerics.hpp"

namespace icl {

// Law N(0, amplitude (-Δ + alpha I)^(-beta)) on [0,1] with Dirichlet conditions.
struct GrfSpec {
    double amplitude = 1.0;
    double alpha = 2.0;
    double beta = 2.0;
};

struct FieldLaw {
    enum class Kind { Constant, UniformConstant, LogGaussian };
    Kind kind = Kind::Constant;
    double value = 1.0;  // constant value, or scale in front of exp(g)
    double lo = 0.0, hi = 0.0;
    GrfSpec grf;

    static FieldLaw constant(double v);
    static FieldLaw uniform_constant(double lo, double hi);
    static FieldLaw log_gaussian(double scale, const GrfSpec& g);
};

// A realized coefficient field: value * exp(Σ coeffs_k φ_k) or a constant.
struct FieldSample {
    bool constant = true;
    double scale = 1.0;
    Vec coeffs;

    double operator()(double x) const;
};

struct PdeFamily {
    int modes = 16;
    FieldLaw a = FieldLaw::constant(0.1);
    FieldLaw v = FieldLaw::constant(0.0);
    int field_modes = 0;  // 0 selects 4 * modes
    int resolved_field_modes() const { return field_modes > 0 ? field_modes : 4 * modes; }
};

struct EllipticTask {
    FieldSample a, v;
    Mat stiffness;
};

FieldSample sample_field(const FieldLaw& law, int field_modes, Rng& rng);
EllipticTask sample_elliptic_task(const PdeFamily& family, Rng& rng);

}  // namespace icl
