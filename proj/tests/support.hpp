#pragma once

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <iterator>
#include <string>
#include <utility>
#include <vector>

#include "error.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace testsupport {

// Relative error with a floor on the denominator so near-zero references
// don't blow the ratio up.
inline double rel_err(double got, double want, double floor_at = 1e-3) {
    const double denom = std::max({std::fabs(got), std::fabs(want), floor_at});
    return std::fabs(got - want) / denom;
}

template <typename T>
percept::TensorT<T> random_tensor(const percept::Shape& shape, percept::SplitMix64& rng,
                                  double lo = -1.0, double hi = 1.0) {
    percept::TensorT<T> t(shape, T(0));
    for (auto& v : t.data) v = static_cast<T>(rng.range(lo, hi));
    return t;
}

// Tensor of pairwise-distinct values whose gaps dwarf the finite difference
// step, for layers whose gradient routes through an argmax.
inline percept::TensorT<double> distinct_tensor(const percept::Shape& shape,
                                                percept::SplitMix64& rng) {
    percept::TensorT<double> t(shape, 0.0);
    const std::size_t n = t.data.size();
    for (std::size_t i = 0; i < n; ++i)
        t.data[i] = 0.01 * static_cast<double>(i) - 0.005 * static_cast<double>(n);
    for (std::size_t i = n; i > 1; --i)
        std::swap(t.data[i - 1], t.data[rng.below(i)]);
    return t;
}

// Central difference d loss / d x. The loss callable must read x through the
// reference (it aliases tensor storage).
template <typename F>
double fd_derivative(F&& loss, double& x, double h = 1e-5) {
    const double saved = x;
    x = saved + h;
    const double up = loss();
    x = saved - h;
    const double down = loss();
    x = saved;
    return (up - down) / (2.0 * h);
}

template <typename F>
void expect_error(percept::ErrorCode code, F&& fn) {
    try {
        fn();
    } catch (const percept::Error& e) {
        CHECK_MESSAGE(e.code() == code, "expected " << percept::error_code_name(code) << ", got "
                                                    << percept::error_code_name(e.code()) << ": "
                                                    << e.what());
        return;
    } catch (const std::exception& e) {
        FAIL("expected a typed error, got: " << e.what());
        return;
    }
    FAIL("expected " << percept::error_code_name(code) << ", but the call succeeded");
}

// Checks every analytic derivative in `analytic` against a central finite
// difference of `loss` with respect to the matching element of `params`.
template <typename F>
void check_grads(std::vector<double>& params, const std::vector<double>& analytic, F&& loss,
                 double tol) {
    REQUIRE(params.size() == analytic.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double fd = fd_derivative(loss, params[i]);
        INFO("element " << i << ": analytic " << analytic[i] << " vs fd " << fd);
        CHECK(rel_err(analytic[i], fd) <= tol);
    }
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE_MESSAGE(bool(in), "cannot open " << path);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    REQUIRE_MESSAGE(bool(out), "cannot write " << path);
    out << content;
}

inline std::string source_dir() { return PERCEPT_SOURCE_DIR; }

inline std::string golden_path(const std::string& name) {
    return source_dir() + "/tests/golden/" + name;
}

inline std::string config_path(const std::string& name) {
    return source_dir() + "/configs/" + name;
}

}  // namespace testsupport
