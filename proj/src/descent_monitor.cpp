#include "klsplit/descent_monitor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "klsplit/errors.hpp"

namespace klsplit {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kTraceTol = 1e-10;
constexpr double kStepBoundTol = 1e-9;

double need(const std::optional<double>& v, const char* field, std::size_t k) {
  if (!v) throw DataError(std::string("missing ") + field + " on record " + std::to_string(k));
  return *v;
}

Verdict from_violations(const CheckReport& r) {
  return r.violations.empty() ? Verdict::Pass : Verdict::Fail;
}

void finish(CheckReport& r, double min_margin) {
  r.verdict = from_violations(r);
  r.details["min_margin"] = r.checked ? nlohmann::json(min_margin) : nlohmann::json(nullptr);
}

Verdict combine(std::initializer_list<Verdict> vs) {
  bool inconclusive = false;
  for (Verdict v : vs) {
    if (v == Verdict::Fail) return Verdict::Fail;
    if (v == Verdict::Inconclusive) inconclusive = true;
  }
  return inconclusive ? Verdict::Inconclusive : Verdict::Pass;
}

struct LineFit {
  double slope = 0.0;
  double r2 = 0.0;
};

LineFit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  LineFit f;
  if (sxx <= 0.0) return f;
  f.slope = sxy / sxx;
  f.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return f;
}

Vector flatten_point(const IterateRecord& r) {
  if (!r.x) throw DataError("record " + std::to_string(r.k) + " carries no iterate");
  return r.x->flatten();
}

}  // namespace

// ---------------------------------------------------------------------------
// H1 / H2 / H2'

CheckReport check_H1(const IterateTrace& trace) {
  CheckReport rep;
  rep.name = "H1";
  if (trace.size() < 2) throw DataError("check_H1: need at least two records");
  double min_margin = kInf;
  for (std::size_t k = 0; k + 1 < trace.size(); ++k) {
    const auto& cur = trace.records[k];
    const auto& nxt = trace.records[k + 1];
    const double a = need(cur.a, "a_k", cur.k);
    const double step = need(nxt.step_norm, "step_norm", nxt.k);
    const double margin = cur.f_val - nxt.f_val - a * step * step;
    ++rep.checked;
    min_margin = std::min(min_margin, margin);
    if (margin < -kTraceTol * (1.0 + std::abs(cur.f_val))) rep.violations.push_back({cur.k, 0, margin});
  }
  finish(rep, min_margin);
  return rep;
}

CheckReport check_H2(const IterateTrace& trace) {
  CheckReport rep;
  rep.name = "H2";
  if (trace.size() < 2) throw DataError("check_H2: need at least two records");
  double min_margin = kInf;
  for (std::size_t k = 1; k < trace.size(); ++k) {
    const auto& r = trace.records[k];
    const double b = need(r.b, "b_k", r.k);
    const double slope = need(r.slope_norm, "slope_norm", r.k);
    const double step = need(r.step_norm, "step_norm", r.k);
    const double eps = r.eps.value_or(0.0);
    const double margin = step + eps - b * slope;
    ++rep.checked;
    min_margin = std::min(min_margin, margin);
    if (margin < -kTraceTol * (1.0 + step)) rep.violations.push_back({r.k, 0, margin});
  }
  finish(rep, min_margin);
  return rep;
}

CheckReport check_H2prime(const IterateTrace& trace) {
  CheckReport rep;
  rep.name = "H2prime";
  if (trace.size() < 2) throw DataError("check_H2prime: need at least two records");
  double min_margin = kInf;
  for (std::size_t k = 0; k + 1 < trace.size(); ++k) {
    const auto& cur = trace.records[k];
    const auto& nxt = trace.records[k + 1];
    const double slope = need(cur.slope_norm, "slope_norm", cur.k);
    const double b = need(nxt.b, "b_k", nxt.k);
    const double step = need(nxt.step_norm, "step_norm", nxt.k);
    const double margin = step - b * slope;
    ++rep.checked;
    min_margin = std::min(min_margin, margin);
    if (margin < -kTraceTol * (1.0 + step)) rep.violations.push_back({cur.k, 0, margin});
  }
  finish(rep, min_margin);
  return rep;
}

CheckReport check_H3(std::span<const double> a, std::span<const double> b,
                     std::span<const double> eps, std::size_t horizon) {
  if (a.empty() || b.empty() || eps.empty() || horizon == 0) throw DomainError("check_H3: empty input");
  if (a.size() < horizon || b.size() < horizon || eps.size() < horizon)
    throw DomainError("check_H3: sequences shorter than horizon");

  CheckReport rep;
  rep.name = "H3";
  rep.checked = horizon;

  double a_lower = kInf;
  std::size_t a_arg = 0;
  double M = 0.0;
  std::size_t M_arg = 0;
  for (std::size_t k = 0; k < horizon; ++k) {
    if (a[k] < a_lower) {
      a_lower = a[k];
      a_arg = k;
    }
    const double ab = a[k] * b[k];
    const double inv = ab > 0.0 ? 1.0 / ab : kInf;
    if (inv > M) {
      M = inv;
      M_arg = k;
    }
  }
  const Verdict v1 = a_lower > 0.0 ? Verdict::Pass : Verdict::Fail;
  if (v1 == Verdict::Fail) rep.violations.push_back({a_arg, 0, a_lower});

  const SummabilityFit fb = summability(b.first(horizon), horizon);
  const Verdict v2 = not_summable_verdict(fb);

  const Verdict v3 = std::isfinite(M) ? Verdict::Pass : Verdict::Fail;
  if (v3 == Verdict::Fail) rep.violations.push_back({M_arg, 0, -kInf});

  const SummabilityFit fe = summability(eps.first(horizon), horizon);
  const Verdict v4 = summable_verdict(fe);

  rep.verdict = combine({v1, v2, v3, v4});
  rep.details = {{"H3_i", v1},
                 {"a_lower", a_lower},
                 {"H3_ii", v2},
                 {"b_fit", fb},
                 {"H3_iii", v3},
                 {"M", std::isfinite(M) ? nlohmann::json(M) : nlohmann::json(nullptr)},
                 {"H3_iv", v4},
                 {"eps_fit", fe}};
  return rep;
}

// ---------------------------------------------------------------------------
// Criticality

void to_json(nlohmann::json& j, const Certificate& c) {
  j = nlohmann::json{{"verdict", c.verdict},
                     {"final_slope", c.final_slope},
                     {"tail_step_sum", c.tail_step_sum},
                     {"f_gap", c.f_gap},
                     {"tail_start", c.tail_start},
                     {"reason", c.reason}};
}

Certificate criticality_certificate(const IterateTrace& trace, double tol) {
  Certificate cert;
  if (trace.empty()) {
    cert.reason = "empty trace";
    return cert;
  }
  const std::size_t n = trace.size();
  const std::size_t steps = n - 1;
  const std::size_t tail_len = std::max<std::size_t>(1, steps / 10);
  cert.tail_start = steps >= tail_len ? n - 1 - tail_len : 0;
  for (std::size_t k = cert.tail_start + 1; k < n; ++k)
    cert.tail_step_sum += trace.records[k].step_norm.value_or(0.0);
  cert.f_gap = std::abs(trace.back().f_val - trace.records[cert.tail_start].f_val);

  if (!trace.back().slope_norm) {
    cert.reason = "last record carries no slope witness";
    return cert;
  }
  cert.final_slope = *trace.back().slope_norm;

  if (trace.status != StopStatus::Converged) {
    cert.reason = "run did not converge (" + to_string(trace.status) + ")";
    cert.verdict = Verdict::Inconclusive;
    return cert;
  }
  const bool ok = cert.final_slope <= tol && cert.tail_step_sum <= tol;
  cert.verdict = ok ? Verdict::Pass : Verdict::Fail;
  cert.reason = ok ? "slope and tail length below tolerance" : "slope or tail length above tolerance";
  return cert;
}

void flag_region(IterateTrace& trace, const KLRegion& region) {
  for (auto& r : trace.records) r.region_flag = region.contains(flatten_point(r), r.f_val);
}

CheckReport check_step_bound(const IterateTrace& trace, const Desingularizer& d, double f_star,
                           double M) {
  CheckReport rep;
  rep.name = "step_bound";
  double min_margin = kInf;
  for (std::size_t k = 1; k + 1 < trace.size(); ++k) {
    const auto& cur = trace.records[k];
    const auto& nxt = trace.records[k + 1];
    if (!cur.region_flag || !nxt.region_flag)
      throw DataError("check_step_bound: region flag missing near record " + std::to_string(cur.k));
    if (!*cur.region_flag || !*nxt.region_flag) continue;

    const double rk = cur.f_val - f_star;
    const double rk1 = nxt.f_val - f_star;
    if (!(rk > 0.0) || rk1 < 0.0)
      throw DomainError("check_step_bound: nonpositive gap at checked record " + std::to_string(cur.k));

    double coef = M;
    if (cur.a && cur.b && *cur.a * *cur.b > 0.0) coef = 1.0 / (*cur.a * *cur.b);
    if (!(coef > 0.0) || !std::isfinite(coef))
      throw DataError("check_step_bound: no schedule on record " + std::to_string(cur.k) + " and no valid M");

    const double lhs = 2.0 * need(nxt.step_norm, "step_norm", nxt.k);
    const double rhs = need(cur.step_norm, "step_norm", cur.k) +
                       coef * (d.value(rk) - d.value(rk1)) + cur.eps.value_or(0.0);
    const double margin = rhs - lhs;
    ++rep.checked;
    min_margin = std::min(min_margin, margin);
    if (margin < -kStepBoundTol * (1.0 + std::abs(rhs))) rep.violations.push_back({cur.k, 0, margin});
  }
  finish(rep, min_margin);
  return rep;
}

// ---------------------------------------------------------------------------
// Rates

std::string to_string(RatePrediction::Regime r) {
  switch (r) {
    case RatePrediction::Regime::FiniteTermination:
      return "finite_termination";
    case RatePrediction::Regime::Exponential:
      return "exponential";
    case RatePrediction::Regime::Polynomial:
      return "polynomial";
    case RatePrediction::Regime::PhiForm:
      return "phi_form";
  }
  return "unknown";
}

std::string to_string(RatePrediction::Basis t) {
  switch (t) {
    case RatePrediction::Basis::StandardFinite:
      return "standard_finite";
    case RatePrediction::Basis::StandardExponential:
      return "standard_exponential";
    case RatePrediction::Basis::StandardPolynomial:
      return "standard_polynomial";
    case RatePrediction::Basis::StrongFinite:
      return "strong_finite";
    case RatePrediction::Basis::StrongPrimitive:
      return "strong_primitive";
  }
  return "unknown";
}

void to_json(nlohmann::json& j, const RatePrediction& p) {
  j = nlohmann::json{
      {"status", p.status == RatePrediction::Status::Ok ? "ok" : "prerequisite_failed"},
      {"regime", to_string(p.regime)},
      {"basis", to_string(p.basis)},
      {"m", p.m},
      {"b_bar", p.b_bar},
      {"description", p.description}};
  if (p.regime == RatePrediction::Regime::Exponential) {
    j["c"] = p.c;
    j["c_iterates"] = p.c / 2.0;
  }
  if (p.regime == RatePrediction::Regime::Polynomial) {
    j["exponent_values"] = p.exponent_values;
    j["exponent_iterates"] = p.exponent_iterates;
  }
}

RatePrediction predict_rates(const Desingularizer& d, std::span<const double> a,
                             std::span<const double> b, bool use_h2prime,
                             std::span<const double> eps) {
  if (d.kind() == Desingularizer::Kind::Power && !(d.theta() > 0.0 && d.theta() <= 1.0))
    throw DomainError("predict_rates: theta outside (0,1]");
  if (!use_h2prime && d.kind() != Desingularizer::Kind::Power)
    throw DomainError("predict_rates: explicit rates need a power desingularizer");

  RatePrediction p;
  auto refuse = [&p](std::string why) {
    p.status = RatePrediction::Status::PrerequisiteFailed;
    p.description = std::move(why);
    return p;
  };

  for (double e : eps)
    if (std::isfinite(e) && e != 0.0) return refuse("rate predictions assume eps_k = 0");

  // trace alignment: a[k] = a_k, b[k] = b_k; b[0] may be absent (NaN)
  double m = kInf, m2 = kInf;
  for (std::size_t k = 0; k + 1 < std::min(a.size(), b.size()); ++k) {
    if (!std::isfinite(a[k]) || !std::isfinite(b[k + 1])) continue;
    m = std::min(m, a[k] * b[k + 1]);
    m2 = std::min(m2, a[k] * b[k + 1] * b[k + 1]);
  }
  double b_bar = 0.0;
  for (double v : b)
    if (std::isfinite(v)) b_bar = std::max(b_bar, v);
  if (!std::isfinite(m)) return refuse("schedule too short to evaluate inf a_k b_{k+1}");
  p.m = m;
  p.b_bar = b_bar;

  const bool power = d.kind() == Desingularizer::Kind::Power;
  const double C = d.C();
  const double theta = d.theta();

  if (!use_h2prime) {
    if (theta == 1.0) {
      if (!(m2 > 0.0)) return refuse("inf a_k b_{k+1}^2 is not positive");
      p.regime = RatePrediction::Regime::FiniteTermination;
      p.basis = RatePrediction::Basis::StandardFinite;
      p.description = "finite termination";
      return p;
    }
    if (!(m > 0.0)) return refuse("inf a_k b_{k+1} is not positive");
    if (theta >= 0.5) {
      p.regime = RatePrediction::Regime::Exponential;
      p.basis = RatePrediction::Basis::StandardExponential;
      p.c = m / (C * C * (1.0 + b_bar));
      const double c = p.c;
      p.values_rate = [c](double S) { return std::exp(-c * S); };
      p.iterates_rate = [c](double S) { return std::exp(-0.5 * c * S); };
      p.description = "values O(exp(-c S)), iterates O(exp(-c S / 2))";
      return p;
    }
    p.regime = RatePrediction::Regime::Polynomial;
    p.basis = RatePrediction::Basis::StandardPolynomial;
    p.exponent_values = -1.0 / (1.0 - 2.0 * theta);
    p.exponent_iterates = -theta / (1.0 - 2.0 * theta);
    const double ev = p.exponent_values, ei = p.exponent_iterates;
    p.values_rate = [ev](double S) { return std::pow(S, ev); };
    p.iterates_rate = [ei](double S) { return std::pow(S, ei); };
    p.description = "values O(S^ev), iterates O(S^ei)";
    return p;
  }

  if (!(m > 0.0)) return refuse("inf a_k b_{k+1} is not positive");
  const PhiPrimitive prim = phi_primitive(d);
  if (prim.finite_at_zero) {
    p.regime = RatePrediction::Regime::FiniteTermination;
    p.basis = RatePrediction::Basis::StrongFinite;
    p.description = "Phi has a finite limit at 0: finite termination";
    return p;
  }
  p.basis = RatePrediction::Basis::StrongPrimitive;
  if (power && theta == 0.5) {
    p.regime = RatePrediction::Regime::Exponential;
    p.c = m / (C * C);
    const double c = p.c;
    p.values_rate = [c](double S) { return std::exp(-c * S); };
    p.iterates_rate = [c](double S) { return std::exp(-0.5 * c * S); };
    p.description = "values O(exp(-m S / C^2)), iterates O(exp(-m S / (2 C^2)))";
    return p;
  }
  if (power) {
    p.regime = RatePrediction::Regime::Polynomial;
    p.exponent_values = -1.0 / (1.0 - 2.0 * theta);
    p.exponent_iterates = -theta / (1.0 - 2.0 * theta);
    const double ev = p.exponent_values, ei = p.exponent_iterates;
    p.values_rate = [ev](double S) { return std::pow(S, ev); };
    p.iterates_rate = [ei](double S) { return std::pow(S, ei); };
    p.description = "values O(Phi^-1(m S)) = O(S^ev)";
    return p;
  }
  p.regime = RatePrediction::Regime::PhiForm;
  auto inv = prim.inverse;
  p.values_rate = [inv, m](double S) { return inv(m * S); };
  p.iterates_rate = [inv, m, d](double S) { return d.value(inv(m * S)); };
  p.description = "values O(Phi^-1(m S)), iterates O(phi(Phi^-1(m S)))";
  return p;
}

std::string to_string(RateFit::Model m) {
  switch (m) {
    case RateFit::Model::Exponential:
      return "exponential";
    case RateFit::Model::Polynomial:
      return "polynomial";
    case RateFit::Model::FiniteTermination:
      return "finite_termination";
  }
  return "unknown";
}

void to_json(nlohmann::json& j, const RateFit& f) {
  j = nlohmann::json{{"chosen", to_string(f.chosen)},
                     {"finite_termination", f.finite_termination},
                     {"points", f.points},
                     {"first_index", f.first_index}};
  if (f.finite_termination) {
    j["termination_index"] = f.termination_index;
  } else {
    j["exponential"] = {{"slope", f.exp_slope}, {"r2", f.exp_r2}};
    j["polynomial"] = {{"slope", f.poly_slope}, {"r2", f.poly_r2}};
  }
}

RateFit fit_rates(std::span<const double> values, std::span<const double> b, double tail_fraction) {
  if (!(tail_fraction > 0.0 && tail_fraction <= 1.0))
    throw DomainError("fit_rates: tail_fraction must lie in (0,1]");
  if (b.size() < values.size()) throw ShapeError("fit_rates: schedule shorter than values");

  RateFit fit;
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (values[k] < 0.0) throw DomainError("fit_rates: negative value at k = " + std::to_string(k));
  }
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (values[k] == 0.0) {
      fit.chosen = RateFit::Model::FiniteTermination;
      fit.finite_termination = true;
      fit.termination_index = k;
      return fit;
    }
  }

  const std::size_t n = values.size();
  const auto burn = static_cast<std::size_t>(std::floor((1.0 - tail_fraction) * static_cast<double>(n)));
  fit.first_index = burn;
  std::vector<double> S_tail, lnS_tail, lnr;
  double S = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (std::isfinite(b[k])) S += b[k];
    if (k < burn || !(S > 0.0)) continue;
    if (!(values[k] > 0.0) || !std::isfinite(values[k]))
      throw DomainError("fit_rates: nonpositive value on the fitted tail at k = " + std::to_string(k));
    S_tail.push_back(S);
    lnS_tail.push_back(std::log(S));
    lnr.push_back(std::log(values[k]));
  }
  fit.points = lnr.size();
  if (fit.points < 5) throw InsufficientDataError("fit_rates: fewer than 5 points on the tail");

  const LineFit e = least_squares(S_tail, lnr);
  const LineFit p = least_squares(lnS_tail, lnr);
  fit.exp_slope = e.slope;
  fit.exp_r2 = e.r2;
  fit.poly_slope = p.slope;
  fit.poly_r2 = p.r2;
  fit.chosen = e.r2 >= p.r2 ? RateFit::Model::Exponential : RateFit::Model::Polynomial;
  return fit;
}

// ---------------------------------------------------------------------------
// Distance by gap

void to_json(nlohmann::json& j, const DiagnosticSeries& s) {
  j = nlohmann::json{{"k", s.k},
                     {"ratios", s.ratios},
                     {"sup", s.sup},
                     {"entry", s.entry},
                     {"window_max", s.window_max},
                     {"tail_nonincreasing", s.tail_nonincreasing},
                     {"bound", s.bound}};
}

DiagnosticSeries distance_gap_diagnostic(const IterateTrace& trace, const Desingularizer& d,
                                         const BlockVector& x_star, double f_star) {
  DiagnosticSeries out;
  const Vector xs = x_star.flatten();
  std::optional<std::size_t> entry;
  double a_lower = kInf, M = 0.0;
  bool schedule = true;

  for (std::size_t k = 1; k < trace.size(); ++k) {
    const auto& prev = trace.records[k - 1];
    const auto& cur = trace.records[k];
    const double r = prev.f_val - f_star;
    if (r <= 0.0) break;
    if (r >= d.eta()) continue;
    const double dist = (flatten_point(cur) - xs).norm();
    const double ratio = dist / phi_tilde(d, r);
    if (!entry && cur.region_flag.value_or(true)) entry = out.ratios.size();
    out.k.push_back(cur.k);
    out.ratios.push_back(ratio);
    out.sup = std::max(out.sup, ratio);
    out.running_max.push_back(out.sup);
    if (cur.a && cur.b && *cur.a > 0.0 && *cur.b > 0.0) {
      a_lower = std::min(a_lower, *cur.a);
      M = std::max(M, 1.0 / (*cur.a * *cur.b));
    } else {
      schedule = false;
    }
  }
  out.entry = entry.value_or(out.ratios.size());
  if (schedule && std::isfinite(a_lower)) out.bound = std::max(1.0 / std::sqrt(a_lower), M);

  const std::size_t tail = out.ratios.size() - out.entry;
  if (tail > 0) {
    const std::size_t w = std::max<std::size_t>(1, tail / 10);
    for (std::size_t s = out.entry; s < out.ratios.size(); s += w) {
      const auto end = std::min(out.ratios.size(), s + w);
      out.window_max.push_back(*std::max_element(out.ratios.begin() + s, out.ratios.begin() + end));
    }
    for (std::size_t i = 1; i < out.window_max.size(); ++i)
      if (out.window_max[i] > out.window_max[i - 1] * (1.0 + 1e-9)) out.tail_nonincreasing = false;
  }
  return out;
}

}  // namespace klsplit
