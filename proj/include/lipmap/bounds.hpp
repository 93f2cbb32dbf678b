#pragma once

#include <optional>
#include <vector>

namespace lipmap {

/// lambda e^{-2t} / (1 - lambda (1 - e^{-2t})): the log-concavity deficit
/// of f_t when f is -lambda-log-concave. DOMAIN once the denominator
/// reaches zero.
double lemma5_lambda(double lambda, double t);

/// e^c / (e^{2t} - 1): the deficit of f_t when sup V - inf V <= c.
double lemma6_lambda(double c, double t);

/// s with 1 - e^{-2s} = 1 / (2 lambda), lambda >= 1.
double switch_time(double lambda);

struct HeadTail {
  double head = 0.0;  ///< int_0^s of the lemma5 deficit
  double tail = 0.0;  ///< int_s^inf of the lemma6 deficit
};

HeadTail closed_form_integrals(double lambda, double c, double s);

struct LipschitzBound {
  double l_tight = 0.0;    ///< sqrt(2) (2 lambda)^{e^c / 2}
  double l_theorem = 0.0;  ///< 2 (2 lambda)^{e^c}
};

LipschitzBound lipschitz_bound(double lambda, double c);

/// A curvature budget t -> lambda(t).
class LambdaProfile {
 public:
  enum class Kind { Zero, Lemma5, Lemma6, Combined, Proposition, Tabulated };

  static LambdaProfile zero();
  static LambdaProfile lemma5(double lambda);
  static LambdaProfile lemma6(double c);
  static LambdaProfile combined(double lambda, double c);
  /// C e^{-2t} / f_min, the budget from D^2 f <= C and f >= f_min.
  static LambdaProfile proposition(double C, double f_min);
  /// Linear interpolation; zero beyond the last time.
  static LambdaProfile tabulated(std::vector<double> times, std::vector<double> values);

  Kind kind() const { return kind_; }
  double operator()(double t) const;
  /// Smallest t where the profile is defined (0, or 0+ for lemma6).
  double valid_from() const { return 0.0; }
  /// Largest t where the profile is defined (lemma5 blow-up time, or +inf).
  double valid_until() const;
  /// int_{t_cut}^inf in closed form, when available.
  std::optional<double> tail_integral(double t_cut) const;
  /// Interior points where the profile has a kink (branch switches).
  std::vector<double> kinks() const;

  double lambda() const { return a_; }
  double c() const { return b_; }

 private:
  LambdaProfile(Kind k, double a, double b) : kind_(k), a_(a), b_(b) {}

  Kind kind_;
  double a_ = 0.0;
  double b_ = 0.0;
  std::vector<double> times_;
  std::vector<double> values_;
};

/// Pointwise min of the lemma5 and lemma6 budgets (lemma6 alone once the
/// lemma5 branch is undefined).
LambdaProfile combined_profile(double lambda, double c);

/// exp(int_0^inf lambda(s) ds): adaptive Simpson on (0, t_cut], closed-form
/// tail beyond when the profile admits one.
double km_lipschitz(const LambdaProfile& profile, double t_cut = 20.0);

/// exp(C / (2 f_min)), from integrating the proposition budget.
double proposition_lipschitz(double C, double f_min);
/// C / (2 f_min^2), the constant as usually quoted alongside that budget.
double proposition_lipschitz_quoted(double C, double f_min);

}  // namespace lipmap
