#include "fhrr/properties.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "fhrr/model.hpp"

namespace fhrr::props {

Real unrelated_bound(Index n) { return Real(5) / std::sqrt(Real(2) * static_cast<Real>(n)); }

namespace {

std::string fmt(Real v) {
  std::ostringstream os;
  os.precision(3);
  os << v;
  return os.str();
}

Result check(std::string suite, std::string name, bool ok, std::string detail) {
  return {std::move(suite), std::move(name), ok, std::move(detail)};
}

bool in_range(const Matrix& m) { return (m.array() >= -1).all() && (m.array() < 1).all(); }

Index uniform_index(Rng& rng, Index lo, Index hi) {
  return std::uniform_int_distribution<Index>(lo, hi)(rng);
}

// Phases clustered near the +-1 seam.
RowVector seam_phases(Rng& rng, Index n) {
  RowVector x(n);
  std::uniform_real_distribution<Real> eps(0, 1e-9);
  for (Index i = 0; i < n; ++i) x[i] = (i % 2 ? 1 : -1) * (Real(1) - eps(rng));
  return x;
}

}  // namespace

SymbolBatch attention_oracle(const SymbolBatch& q, const SymbolBatch& k, const SymbolBatch& v,
                             const RowVector* key_mask) {
  const Index n = q.dim();
  Matrix out(q.count(), v.dim());
  for (Index i = 0; i < q.count(); ++i) {
    for (Index d = 0; d < v.dim(); ++d) {
      Real re = 0, im = 0;
      for (Index j = 0; j < k.count(); ++j) {
        Real s = 0;
        for (Index l = 0; l < n; ++l) s += std::cos(kPi * (q.phases()(i, l) - k.phases()(j, l)));
        s /= static_cast<Real>(n);
        if (key_mask) s *= (*key_mask)[j];
        re += s * std::cos(kPi * v.phases()(j, d));
        im += s * std::sin(kPi * v.phases()(j, d));
      }
      Real a = re * re + im * im < kEpsilonMag ? 0 : std::atan2(im, re) / kPi;
      out(i, d) = a >= 1 ? -1 : a;
    }
  }
  return SymbolBatch(std::move(out));
}

// ---------------------------------------------------------------------------

std::vector<Result> vsa_suite(const Options& o) {
  const std::string S = "vsa";
  std::vector<Result> out;
  Rng rng(o.seed);
  const Index n = o.n;
  const Index trials = o.trials;

  {
    bool ok = true;
    for (Index t = 0; t < 50 && ok; ++t) {
      const Symbol a(wrap(seam_phases(rng, n)));
      const Symbol b = random_symbol(rng, n);
      const Real p = std::uniform_real_distribution<Real>(-2, 2)(rng);
      ok = in_range(a.phases()) && in_range(bind(a, b, p).phases()) &&
           in_range(bundle(SymbolBatch::from_rows(std::vector<Symbol>{a, b})).phases()) &&
           in_range(angle(to_complex(SymbolBatch::from_rows(std::vector<Symbol>{a}))).phases());
      ok = ok && wrap(RowVector(RowVector::Constant(1, Real(1)))).phases()[0] == -1;
    }
    out.push_back(check(S, "range [-1, 1) incl. seam inputs", ok, "wrap/bind/bundle/angle"));
  }

  Real sym = 0, self = 0, inv = 0, iso = 0, round = 0;
  bool singleton = true;
  Index unrelated = 0, attracted = 0;
  const Real bound = unrelated_bound(n);
  for (Index t = 0; t < trials; ++t) {
    const Symbol a = random_symbol(rng, n), b = random_symbol(rng, n), c = random_symbol(rng, n);
    const Real p = std::uniform_real_distribution<Real>(-2, 2)(rng);
    sym = std::max(sym, std::abs(similarity(a, b) - similarity(b, a)));
    self = std::max(self, std::abs(similarity(a, a) - 1));
    inv = std::max(inv, std::abs(similarity(bind(bind(a, b, p), b, -p), a) - 1));
    iso = std::max(iso, std::abs(similarity(bind(a, c), bind(b, c)) - similarity(a, b)));
    const Matrix back = angle(to_complex(SymbolBatch::from_rows(std::vector<Symbol>{a}))).phases();
    // Distance on the circle so that -1 and 1 - tiny count as equal.
    for (Index i = 0; i < n; ++i) {
      const Real d = std::abs(back(0, i) - a.phases()[i]);
      round = std::max(round, std::min(d, 2 - d));
    }
    singleton = singleton && bundle(SymbolBatch::from_rows(std::vector<Symbol>{a})) == a;
    if (std::abs(similarity(a, b)) < bound) ++unrelated;
    if (similarity(bundle(SymbolBatch::from_rows(std::vector<Symbol>{a, b})), a) > similarity(c, a)) ++attracted;
  }
  out.push_back(check(S, "similarity symmetry", sym <= 1e-12, "max err " + fmt(sym)));
  out.push_back(check(S, "self-similarity", self <= 1e-12, "max err " + fmt(self)));
  out.push_back(check(S, "binding invertibility", inv <= 1e-9, "max err " + fmt(inv)));
  out.push_back(check(S, "binding isometry", iso <= 1e-12, "max err " + fmt(iso)));
  out.push_back(check(S, "singleton bundle identity", singleton, "exact"));
  out.push_back(check(S, "complex round trip", round <= 1e-12, "max err " + fmt(round)));
  const Real frac = static_cast<Real>(unrelated) / static_cast<Real>(trials);
  out.push_back(check(S, "unrelatedness", frac >= 0.99,
                      fmt(frac * 100) + "% of pairs below " + fmt(bound) + " (need 99%)"));
  const Real att = static_cast<Real>(attracted) / static_cast<Real>(trials);
  if (n >= 512)
    out.push_back(check(S, "bundle attraction", att >= 0.95, fmt(att * 100) + "% (need 95%)"));
  else
    out.push_back(check(S, "bundle attraction", true, "skipped below n = 512"));
  return out;
}

// ---------------------------------------------------------------------------

std::vector<Result> layers_suite(const Options& o) {
  const std::string S = "layers";
  std::vector<Result> out;
  Rng rng(o.seed + 1);
  const Index n = o.n;
  const Index m = 6;

  {
    nn::ResidualBlock block("b", n, rng);
    nn::SelfAttentionModule self("s", n, rng);
    nn::CrossAttentionModule cross("c", n, 3, rng);
    const SymbolBatch a = random_symbols(rng, m, n);
    const bool ok = block.forward(a).count() == m && block.forward(a).dim() == n && self.forward(a).count() == m &&
                    self.forward(a).dim() == n && cross.forward(a).count() == 3 && cross.forward(a).dim() == n;
    out.push_back(check(S, "shape preservation", ok, "residual/self m x n, cross q x n"));
  }
  {
    Real worst = 0;
    for (Index t = 0; t < 200; ++t) {
      const Index qm = uniform_index(rng, 1, 8), km = uniform_index(rng, 1, 8), d = uniform_index(rng, 1, 16);
      const SymbolBatch q = random_symbols(rng, qm, d), k = random_symbols(rng, km, d), v = random_symbols(rng, km, d);
      RowVector mask = RowVector::Ones(km);
      const bool masked = t % 2 == 1;
      if (masked) mask[uniform_index(rng, 0, km - 1)] = 0;
      const Matrix got = nn::vsa_attention(q, k, v, masked ? &mask : nullptr).phases();
      const Matrix ref = attention_oracle(q, k, v, masked ? &mask : nullptr).phases();
      for (Index i = 0; i < got.size(); ++i) {
        const Real diff = std::abs(got.data()[i] - ref.data()[i]);
        worst = std::max(worst, std::min(diff, 2 - diff));
      }
    }
    out.push_back(check(S, "attention oracle", worst <= 1e-12, "max err " + fmt(worst)));
  }
  {
    nn::SelfAttentionModule self("s", n, rng);
    const SymbolBatch a = random_symbols(rng, m, n);
    std::vector<Index> perm(static_cast<std::size_t>(m));
    std::iota(perm.begin(), perm.end(), Index{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix permuted(m, n);
    for (Index i = 0; i < m; ++i) permuted.row(i) = a.phases().row(perm[static_cast<std::size_t>(i)]);
    const Matrix base = self.forward(a).phases();
    const Matrix moved = self.forward(SymbolBatch(permuted)).phases();
    Real worst = 0;
    for (Index i = 0; i < m; ++i)
      for (Index j = 0; j < n; ++j) {
        const Real d = std::abs(moved(i, j) - base(perm[static_cast<std::size_t>(i)], j));
        worst = std::max(worst, std::min(d, 2 - d));
      }
    out.push_back(check(S, "self-attention permutation equivariance", worst <= 1e-12, "max err " + fmt(worst)));
  }
  {
    nn::SelfAttentionModule self("s", n, rng);
    nn::CrossAttentionModule cross("c", n, 3, rng);
    Matrix a = random_symbols(rng, m, n).phases();
    RowVector mask = RowVector::Ones(m);
    mask[m - 1] = 0;
    mask[1] = 0;
    Matrix zeroed = a;
    zeroed.row(m - 1).setZero();
    zeroed.row(1).setZero();
    const SymbolBatch q = random_symbols(rng, 4, n);
    const bool att = nn::vsa_attention(q, SymbolBatch(a), SymbolBatch(a), &mask) ==
                     nn::vsa_attention(q, SymbolBatch(zeroed), SymbolBatch(zeroed), &mask);
    const bool crs = cross.forward(SymbolBatch(a), &mask) == cross.forward(SymbolBatch(zeroed), &mask);
    // In self-attention a masked row still produces its own output row; only
    // the unmasked rows are compared.
    const Matrix s1 = self.forward(SymbolBatch(a), &mask).phases();
    const Matrix s2 = self.forward(SymbolBatch(zeroed), &mask).phases();
    bool live = true;
    for (Index i = 0; i < m; ++i)
      if (mask[i] != 0) live = live && s1.row(i) == s2.row(i);
    out.push_back(check(S, "masked keys contribute nothing", att && crs && live, "bitwise equality"));
  }
  {
    nn::Codebook book(random_symbols(rng, 10, n));
    bool ok = true;
    for (Index t = 0; t < 100 && ok; ++t) {
      const auto p = book.predict(random_symbol(rng, n));
      const RowVector f = ((p.similarities.array() * 3).exp() + p.similarities.array().cube()).matrix();
      Index best = 0;
      for (Index c = 1; c < f.size(); ++c)
        if (f[c] > f[best]) best = c;
      ok = best == p.label;
    }
    out.push_back(check(S, "argmax invariance", ok, "exp(3s) + s^3 transform"));
  }
  if (n >= 512) {
    const SymbolBatch a = random_symbols(rng, 32, n);
    nn::ResidualBlock block("b", n, rng);
    auto mean_sim = [&](const SymbolBatch& y) {
      Real s = 0;
      for (Index i = 0; i < a.count(); ++i) s += similarity(a.row(i), y.row(i));
      return s / static_cast<Real>(a.count());
    };
    const Real with_bias = mean_sim(block.forward(a));
    block.hidden().bias().cplx.setZero();
    block.out().bias().cplx.setZero();
    const Real without = mean_sim(block.forward(a));
    out.push_back(check(S, "near-identity initialization", with_bias > 0.8 && without < 0.2,
                        "mean sim " + fmt(with_bias) + " (need > 0.8), zero bias " + fmt(without) + " (need < 0.2)"));
  } else {
    out.push_back(check(S, "near-identity initialization", true, "skipped below n = 512"));
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

Matrix random_phases(Rng& rng, Index rows, Index cols) { return random_symbols(rng, rows, cols).phases(); }

// Entries uniform on [lo, hi).
Matrix random_real(Rng& rng, Index rows, Index cols, Real lo, Real hi) {
  std::uniform_real_distribution<Real> u(lo, hi);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

CMatrix random_bias(Rng& rng, Index cols) {
  return (random_real(rng, 1, cols, 0.5, 1.5).cast<Complex>() +
          Complex(0, 1) * random_real(rng, 1, cols, -0.5, 0.5).cast<Complex>());
}

struct Owned {
  std::vector<std::unique_ptr<ad::Parameter>> inputs;
  std::shared_ptr<void> module;
  Matrix targets;
};

ad::Parameter* add_input(Owned& o, std::string name, Matrix phases) {
  o.inputs.push_back(std::make_unique<ad::Parameter>(ad::Parameter::phase(std::move(name), std::move(phases))));
  return o.inputs.back().get();
}

ad::Var similarity_loss(ad::Tape& t, ad::Var out, const Matrix& targets) {
  return t.affine(t.sum(t.row_similarity(out, t.constant(targets))), -1, static_cast<Real>(targets.rows()));
}

template <typename M>
std::vector<ad::Parameter*> all_params(M& module, const Owned& o) {
  auto p = module.parameters();
  for (const auto& in : o.inputs) p.push_back(in.get());
  return p;
}

}  // namespace

Real min_complex_norm(const GradientCase& c) {
  ad::Tape t;
  c.loss(t);
  Real lo = std::numeric_limits<Real>::infinity();
  for (std::size_t i = 0; i < t.size(); ++i) {
    const ad::Var v{static_cast<std::int32_t>(i)};
    if (t.is_complex(v)) lo = std::min(lo, t.cplx(v).cwiseAbs2().minCoeff());
  }
  return lo;
}

std::vector<GradientCase> gradient_cases(std::uint64_t seed, Index count, Index max_n) {
  std::vector<GradientCase> cases;
  Rng rng(seed);
  for (Index c = 0; c < count; ++c) {
    auto o = std::make_shared<Owned>();
    const Index n = uniform_index(rng, std::min<Index>(4, max_n), max_n);
    const Index m = uniform_index(rng, 1, 4);
    nn::LayerInit init;
    init.weight_scale = std::uniform_real_distribution<Real>(0.3, 1.0)(rng);
    GradientCase g;
    const std::string tag = "#" + std::to_string(c) + " n=" + std::to_string(n) + " m=" + std::to_string(m);
    switch (c % 8) {
      case 0:
      case 1: {
        const Index n_out = uniform_index(rng, 2, max_n);
        auto layer = std::make_shared<nn::PBLayer>("pb", n, n_out, rng, init);
        Index rows = m;
        if (c % 8 == 1) {
          rows = uniform_index(rng, 1, 3);
          layer->with_reduction(rows, m);
          layer->reduction().real = random_real(rng, rows, m, 0.5, 1.5);
        }
        layer->bias().cplx = random_bias(rng, n_out);
        ad::Parameter* a = add_input(*o, "A", random_phases(rng, m, n));
        o->targets = random_phases(rng, rows, n_out);
        g.name = std::string(c % 8 ? "PBLayer+reduction " : "PBLayer ") + tag;
        g.params = all_params(*layer, *o);
        g.loss = [layer, a, o = o.get()](ad::Tape& t) {
          return similarity_loss(t, layer->forward(t, t.parameter(*a)), o->targets);
        };
        o->module = layer;
        break;
      }
      case 2:
      case 3: {
        auto block = std::make_shared<nn::ResidualBlock>("res", n, rng, init, c % 8 == 2);
        block->hidden().bias().cplx = random_bias(rng, 2 * n);
        ad::Parameter* a = add_input(*o, "A", random_phases(rng, m, n));
        o->targets = random_phases(rng, m, n);
        g.name = std::string(c % 8 == 2 ? "ResidualBlock " : "ResidualBlock no-skip ") + tag;
        g.params = all_params(*block, *o);
        g.loss = [block, a, o = o.get()](ad::Tape& t) {
          return similarity_loss(t, block->forward(t, t.parameter(*a)), o->targets);
        };
        o->module = block;
        break;
      }
      case 4: {
        const Index km = uniform_index(rng, 2, 5);
        auto mask = std::make_shared<RowVector>(RowVector::Ones(km));
        (*mask)[km - 1] = 0;
        ad::Parameter* q = add_input(*o, "Q", random_phases(rng, m, n));
        ad::Parameter* k = add_input(*o, "K", random_phases(rng, km, n));
        ad::Parameter* v = add_input(*o, "V", random_phases(rng, km, n));
        o->targets = random_phases(rng, m, n);
        g.name = "vsa_attention masked " + tag;
        for (const auto& in : o->inputs) g.params.push_back(in.get());
        g.loss = [q, k, v, mask, o = o.get()](ad::Tape& t) {
          return similarity_loss(
              t, nn::vsa_attention(t, t.parameter(*q), t.parameter(*k), t.parameter(*v), mask.get()), o->targets);
        };
        o->module = mask;
        break;
      }
      case 5: {
        auto self = std::make_shared<nn::SelfAttentionModule>("self", n, rng, init, c % 16 < 8);
        const Index examples = uniform_index(rng, 1, 2);
        const Index rows = m + 1;
        ad::Parameter* a = add_input(*o, "A", random_phases(rng, examples * rows, n));
        auto masks = std::make_shared<std::vector<RowVector>>(static_cast<std::size_t>(examples),
                                                              RowVector::Ones(rows));
        masks->front()[0] = 0;
        o->targets = random_phases(rng, examples * rows, n);
        g.name = "SelfAttention examples=" + std::to_string(examples) + " " + tag;
        g.params = all_params(*self, *o);
        g.loss = [self, a, masks, examples, o = o.get()](ad::Tape& t) {
          return similarity_loss(t, self->forward(t, t.parameter(*a), examples, masks.get()), o->targets);
        };
        o->module = self;
        break;
      }
      case 6: {
        const Index queries = uniform_index(rng, 1, 4);
        const bool qproj = c % 16 >= 8;
        auto cross = std::make_shared<nn::CrossAttentionModule>("cross", n, queries, rng, init, true, qproj);
        const Index examples = uniform_index(rng, 1, 2);
        const Index rows = m + 1;
        ad::Parameter* a = add_input(*o, "A", random_phases(rng, examples * rows, n));
        o->targets = random_phases(rng, examples * queries, n);
        g.name = std::string("CrossAttention") + (qproj ? "+qproj " : " ") + "q=" + std::to_string(queries) + " " +
                 tag;
        g.params = all_params(*cross, *o);
        g.loss = [cross, a, examples, o = o.get()](ad::Tape& t) {
          return similarity_loss(t, cross->forward(t, t.parameter(*a), examples), o->targets);
        };
        o->module = cross;
        break;
      }
      default: {
        nn::ModelSpec spec;
        spec.dim = n;
        spec.init = init;
        spec.seed = seed + static_cast<std::uint64_t>(c);
        const int kind = static_cast<int>((c / 8) % 3);
        spec.arch = kind == 0 ? nn::Architecture::DeepMlp
                              : (kind == 1 ? nn::Architecture::SelfAttention : nn::Architecture::CrossAttention);
        spec.blocks = 2;
        spec.queries = 2;
        spec.input_rows = spec.arch == nn::Architecture::DeepMlp ? 1 : m + 1;
        const Index examples = 2;
        auto model = std::make_shared<nn::Model>(spec);
        ad::Parameter* a = add_input(*o, "A", random_phases(rng, examples * spec.input_rows, n));
        o->targets = random_phases(rng, examples, n);
        g.name = "Model " + std::string(nn::to_string(spec.arch)) + " " + tag;
        g.params = model->parameters();
        for (const auto& in : o->inputs) g.params.push_back(in.get());
        g.loss = [model, a, examples, o = o.get()](ad::Tape& t) {
          return similarity_loss(t, model->forward(t, t.parameter(*a), examples), o->targets);
        };
        o->module = model;
        break;
      }
    }
    g.owner = o;
    // Redraw configurations where a complex intermediate nearly cancels: the
    // epsilon_mag guard and the curvature of angle() there swamp FD accuracy.
    if (min_complex_norm(g) < kMinConditionedNorm) {
      --c;
      continue;
    }
    cases.push_back(std::move(g));
  }
  return cases;
}

GradientReport finite_difference_check(const GradientCase& c, Real h, Real floor) {
  ad::Gradient grad(c.params);
  {
    ad::Tape t;
    t.backward(c.loss(t), grad);
  }
  auto eval = [&] {
    ad::Tape t;
    return t.scalar(c.loss(t));
  };
  GradientReport r;
  auto compare = [&](Real analytic, Real& slot, const std::string& where) {
    const Real saved = slot;
    slot = saved + h;
    const Real up = eval();
    slot = saved - h;
    const Real down = eval();
    slot = saved;
    const Real fd = (up - down) / (2 * h);
    const Real err = std::abs(analytic - fd) / std::max({std::abs(analytic), std::abs(fd), floor});
    ++r.scalars;
    if (err >= r.max_rel_error) {
      r.max_rel_error = err;
      r.worst = where;
    }
  };
  for (ad::Parameter* p : c.params) {
    if (!p->trainable) continue;
    const auto& s = grad.slot(*p);
    if (p->is_complex()) {
      auto* raw = reinterpret_cast<Real*>(p->cplx.data());
      for (Index i = 0; i < p->cplx.size(); ++i) {
        compare(s.cplx.data()[i].real(), raw[2 * i], p->name + ".re[" + std::to_string(i) + "]");
        compare(s.cplx.data()[i].imag(), raw[2 * i + 1], p->name + ".im[" + std::to_string(i) + "]");
      }
    } else {
      for (Index i = 0; i < p->real.size(); ++i)
        compare(s.real.data()[i], p->real.data()[i], p->name + "[" + std::to_string(i) + "]");
    }
  }
  return r;
}

// ---------------------------------------------------------------------------

std::vector<Result> diff_suite(const Options& o) {
  const std::string S = "diff";
  std::vector<Result> out;
  const auto cases = gradient_cases(o.seed + 2, o.gradient_cases, o.gradient_dim);
  Real worst = 0;
  std::string where;
  Index scalars = 0;
  for (const auto& c : cases) {
    const GradientReport r = finite_difference_check(c);
    scalars += r.scalars;
    if (r.max_rel_error >= worst) {
      worst = r.max_rel_error;
      where = c.name + " " + r.worst;
    }
  }
  out.push_back(check(S, "finite-difference agreement", worst < 1e-4,
                      std::to_string(cases.size()) + " cases, " + std::to_string(scalars) +
                          " scalars, max rel err " + fmt(worst) + " at " + where));

  const GradientCase& c = cases[std::min<std::size_t>(cases.size() - 1, 5)];
  ad::Gradient g1(c.params), g2(c.params), g3(c.params);
  const Real alpha = 2.75;
  {
    ad::Tape t;
    t.backward(c.loss(t), g1);
  }
  {
    ad::Tape t;
    t.backward(t.affine(c.loss(t), alpha, 0), g2);
  }
  {
    ad::Tape t;
    t.backward(c.loss(t), g3);
  }
  Real lin = 0;
  bool same = true;
  for (std::size_t i = 0; i < g1.slots().size(); ++i) {
    const auto& a = g1.slots()[i];
    const auto& b = g2.slots()[i];
    const auto& d = g3.slots()[i];
    if (a.param->is_complex()) {
      lin = std::max(lin, (b.cplx - alpha * a.cplx).cwiseAbs().maxCoeff());
      same = same && a.cplx == d.cplx;
    } else {
      lin = std::max(lin, (b.real - alpha * a.real).cwiseAbs().maxCoeff());
      same = same && a.real == d.real;
    }
  }
  out.push_back(check(S, "backward linearity", lin <= 1e-12, "max err " + fmt(lin)));
  out.push_back(check(S, "gradient determinism", same, "bitwise"));
  {
    ad::Tape t;
    c.loss(t);
    out.push_back(check(S, "tape replay", t.replay_matches(), "bitwise recomputation"));
  }
  return out;
}

std::vector<Result> run_all(const Options& o) {
  std::vector<Result> all = vsa_suite(o);
  for (auto&& r : layers_suite(o)) all.push_back(std::move(r));
  for (auto&& r : diff_suite(o)) all.push_back(std::move(r));
  return all;
}

}  // namespace fhrr::props
