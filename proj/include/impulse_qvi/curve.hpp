#pragma once

#include "impulse_qvi/core.hpp"

#include <cmath>
#include <utility>
#include <variant>
#include <vector>

namespace impulse_qvi {

/// A scalar coefficient: either a constant or a piecewise-linear table.
///
/// Table evaluation interpolates linearly between samples and extends the
/// nearest endpoint value outside the sampled range.
class Curve {
public:
    enum class Kind { constant, table };

    Curve() = default;

    static Curve constant(double value) {
        Curve c;
        c.kind_ = Kind::constant;
        c.ys_ = {value};
        return c;
    }

    static Curve table(std::vector<double> xs, std::vector<double> ys) {
        if (xs.empty() || xs.size() != ys.size())
            throw SpecError("curve table: abscissae and ordinates must be nonempty and equal length");
        for (std::size_t i = 1; i < xs.size(); ++i)
            if (!(xs[i] > xs[i - 1])) throw SpecError("curve table: abscissae must be strictly increasing");
        for (std::size_t i = 0; i < xs.size(); ++i)
            if (!std::isfinite(xs[i]) || !std::isfinite(ys[i])) throw SpecError("curve table: non-finite sample");
        Curve c;
        c.kind_ = Kind::table;
        c.xs_ = std::move(xs);
        c.ys_ = std::move(ys);
        return c;
    }

    [[nodiscard]] Kind kind() const noexcept { return kind_; }
    [[nodiscard]] bool is_constant() const noexcept { return kind_ == Kind::constant || ys_.size() == 1; }
    [[nodiscard]] const std::vector<double>& abscissae() const noexcept { return xs_; }
    [[nodiscard]] const std::vector<double>& ordinates() const noexcept { return ys_; }

    double operator()(double x) const {
        if (kind_ == Kind::constant || ys_.size() == 1) return ys_.front();
        if (x <= xs_.front()) return ys_.front();
        if (x >= xs_.back()) return ys_.back();
        const auto it = std::upper_bound(xs_.begin(), xs_.end(), x);
        const std::size_t j = static_cast<std::size_t>(it - xs_.begin());
        const double w = (x - xs_[j - 1]) / (xs_[j] - xs_[j - 1]);
        return ys_[j - 1] + w * (ys_[j] - ys_[j - 1]);
    }

    /// Breakpoints strictly inside (a, b), in increasing order.
    [[nodiscard]] std::vector<double> breakpoints_within(double a, double b) const {
        std::vector<double> out;
        if (kind_ == Kind::table)
            for (double x : xs_)
                if (x > a && x < b) out.push_back(x);
        return out;
    }

    [[nodiscard]] double min_value() const { return *std::min_element(ys_.begin(), ys_.end()); }
    [[nodiscard]] double max_value() const { return *std::max_element(ys_.begin(), ys_.end()); }

    /// Largest absolute slope between consecutive table samples (0 for constants).
    [[nodiscard]] double lipschitz_constant() const {
        double l = 0.0;
        for (std::size_t i = 1; i < xs_.size(); ++i)
            l = std::max(l, std::abs(ys_[i] - ys_[i - 1]) / (xs_[i] - xs_[i - 1]));
        return l;
    }

private:
    Kind kind_ = Kind::constant;
    std::vector<double> xs_;
    std::vector<double> ys_{0.0};
};

/// Bounded increasing utility `level - scale * exp(-rate * x)`.
struct Saturating {
    double level = 1.0;
    double scale = 1.0;
    double rate = 1.0;

    double operator()(double x) const { return level - scale * std::exp(-rate * x); }
};

/// State function used for f, g1 and g2.
class UtilityFunction {
public:
    UtilityFunction() = default;
    UtilityFunction(Curve c) : impl_(std::move(c)) {}          // NOLINT(google-explicit-constructor)
    UtilityFunction(Saturating s) : impl_(s) {}                 // NOLINT(google-explicit-constructor)

    double operator()(double x) const {
        return std::visit([x](const auto& f) { return f(x); }, impl_);
    }

    [[nodiscard]] bool is_constant() const {
        const auto* c = std::get_if<Curve>(&impl_);
        return c != nullptr && c->is_constant();
    }
    [[nodiscard]] const Curve* curve() const { return std::get_if<Curve>(&impl_); }
    [[nodiscard]] const Saturating* saturating() const { return std::get_if<Saturating>(&impl_); }

private:
    std::variant<Curve, Saturating> impl_{Curve::constant(0.0)};
};

} // namespace impulse_qvi
