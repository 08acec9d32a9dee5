#include "cnnide/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>

namespace cnnide {

Regime parse_regime(const std::string& name) {
  if (name == "translating-blobs") return Regime::TranslatingBlobs;
  if (name == "advection-diffusion") return Regime::AdvectionDiffusion;
  if (name == "rotational-flow") return Regime::RotationalFlow;
  fail(Errc::ConfigError, "unknown regime '" + name + "'");
}

std::string regime_name(Regime r) {
  switch (r) {
    case Regime::TranslatingBlobs: return "translating-blobs";
    case Regime::AdvectionDiffusion: return "advection-diffusion";
    case Regime::RotationalFlow: return "rotational-flow";
  }
  return "?";
}

void SimConfig::validate() const {
  require(n >= 4, Errc::InvalidArgument, "sim grid must be at least 4x4");
  require(tau >= 1 && T > tau, Errc::InvalidArgument, "sim needs T > tau");
  require(amplitude >= 0.0 && amplitude <= n / 4.0, Errc::InvalidArgument,
          "flow amplitude must lie in [0, n/4] cells per step");
  require(diffusion >= 0.0, Errc::InvalidArgument, "diffusion must be non-negative");
  if (diffusion > 0.25) {
    fail(Errc::UnstableConfig, "explicit diffusion step needs diffusion <= 0.25 cells^2/step, got " +
                                   std::to_string(diffusion));
  }
  require(forcing.sigma2 >= 0.0 && forcing.rho > 0.0, Errc::InvalidArgument, "bad forcing parameters");
  require(n_blobs >= 1 && blob_width > 0.0, Errc::InvalidArgument, "bad blob parameters");
}

namespace {

double wrap01(double v) { return v - std::floor(v); }

// signed separation on the unit torus when periodic
double sep(double a, double b, bool periodic) {
  double d = a - b;
  if (periodic) d -= std::round(d);
  return d;
}

struct Blob {
  Point c;
  double height;
};

Point rotate_about_centre(const Point& p, double angle) {
  const double cx = p.x - 0.5, cy = p.y - 0.5, cs = std::cos(angle), sn = std::sin(angle);
  return {0.5 + cs * cx - sn * cy, 0.5 + sn * cx + cs * cy};
}

Eigen::VectorXd bilinear_departure(const GridSpec& g, const Eigen::VectorXd& y, const Eigen::VectorXd& ux,
                                   const Eigen::VectorXd& uy, bool periodic) {
  const int n = g.n();
  Eigen::VectorXd out(g.size());
  for (int i = 0; i < g.size(); ++i) {
    const Point s = g.center(i);
    double gx = (s.x - ux[i]) * n - 0.5, gy = (s.y - uy[i]) * n - 0.5;
    if (!periodic) {
      gx = std::clamp(gx, 0.0, n - 1.0);
      gy = std::clamp(gy, 0.0, n - 1.0);
    }
    const double fx = std::floor(gx), fy = std::floor(gy);
    const double ax = gx - fx, ay = gy - fy;
    auto at = [&](int r, int c) {
      if (periodic) {
        r = ((r % n) + n) % n;
        c = ((c % n) + n) % n;
      } else {
        r = std::min(r, n - 1);
        c = std::min(c, n - 1);
      }
      return y[g.index(r, c)];
    };
    const int c0 = static_cast<int>(fx), r0 = static_cast<int>(fy);
    out[i] = (1 - ay) * ((1 - ax) * at(r0, c0) + ax * at(r0, c0 + 1)) +
             ay * ((1 - ax) * at(r0 + 1, c0) + ax * at(r0 + 1, c0 + 1));
  }
  return out;
}

// y + kappa * 5-point Laplacian; zero-flux walls when not periodic
Eigen::VectorXd diffuse(const GridSpec& g, const Eigen::VectorXd& y, double kappa, bool periodic) {
  const int n = g.n();
  Eigen::VectorXd out = y;
  auto nb = [&](int r, int c, int rr, int cc) {
    if (periodic) return y[g.index((rr + n) % n, (cc + n) % n)];
    if (rr < 0 || rr >= n || cc < 0 || cc >= n) return y[g.index(r, c)];
    return y[g.index(rr, cc)];
  };
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      const double v = y[g.index(r, c)];
      out[g.index(r, c)] += kappa * (nb(r, c, r - 1, c) + nb(r, c, r + 1, c) + nb(r, c, r, c - 1) +
                                     nb(r, c, r, c + 1) - 4.0 * v);
    }
  return out;
}

}  // namespace

SimResult simulate(const SimConfig& cfg) {
  cfg.validate();
  const GridSpec g(cfg.n);
  const int m = g.size();
  Rng rng(derive_seed(cfg.seed, 0x53494dULL));
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  SimResult res;
  res.direction = std::isnan(cfg.direction) ? 2.0 * std::numbers::pi * unif(rng) : cfg.direction;
  const double speed = cfg.amplitude / cfg.n;  // unit-square lengths per step
  const double vx = speed * std::cos(res.direction), vy = speed * std::sin(res.direction);

  std::optional<GaussianNoise> forcing;
  if (cfg.forcing.sigma2 > 0.0) forcing = GaussianNoise::matern(g, cfg.forcing);

  if (cfg.regime == Regime::TranslatingBlobs) {
    std::vector<Blob> blobs(cfg.n_blobs);
    // start far enough inside that the path stays on the grid
    const double travel = std::min(0.3, speed * (cfg.T - 1));
    for (auto& b : blobs) {
      const double lo = 0.2, span = 0.6;
      b.c = {lo + span * unif(rng), lo + span * unif(rng)};
      if (!cfg.periodic && cfg.rotation == 0.0) {
        b.c.x -= 0.5 * travel * std::cos(res.direction);
        b.c.y -= 0.5 * travel * std::sin(res.direction);
      }
      b.height = 0.5 + unif(rng);
    }
    const double w = cfg.blob_width / cfg.n;
    auto render = [&](const std::vector<Blob>& bs) {
      Eigen::VectorXd y = Eigen::VectorXd::Zero(m);
      for (int i = 0; i < m; ++i) {
        const Point s = g.center(i);
        for (const auto& b : bs) {
          const double dx = sep(s.x, b.c.x, cfg.periodic), dy = sep(s.y, b.c.y, cfg.periodic);
          y[i] += b.height * std::exp(-(dx * dx + dy * dy) / (2.0 * w * w));
        }
      }
      return y;
    };
    for (int t = 0; t < cfg.T; ++t) {
      Eigen::VectorXd y = render(blobs);
      if (forcing) y += forcing->sample(rng);
      res.frames.emplace_back(g, std::move(y));
      if (t + 1 == cfg.T) break;

      // per-blob displacement; the translation part is exactly (vx, vy)
      std::vector<Point> disp(cfg.n_blobs);
      std::vector<Blob> next = blobs;
      for (int k = 0; k < cfg.n_blobs; ++k) {
        Point d{vx, vy};
        if (cfg.rotation != 0.0) {
          const Point r = rotate_about_centre(blobs[k].c, cfg.rotation);
          d.x += r.x - blobs[k].c.x;
          d.y += r.y - blobs[k].c.y;
        }
        disp[k] = d;
        next[k].c = {blobs[k].c.x + d.x, blobs[k].c.y + d.y};
        if (cfg.periodic) next[k].c = {wrap01(next[k].c.x), wrap01(next[k].c.y)};
      }
      // each pixel carries the displacement of the blob that dominates it
      Eigen::VectorXd fx(m), fy(m);
      for (int i = 0; i < m; ++i) {
        const Point s = g.center(i);
        int best = 0;
        double best_v = -1.0;
        for (int k = 0; k < cfg.n_blobs; ++k) {
          const double dx = sep(s.x, blobs[k].c.x, cfg.periodic), dy = sep(s.y, blobs[k].c.y, cfg.periodic);
          const double v = blobs[k].height * std::exp(-(dx * dx + dy * dy) / (2.0 * w * w));
          if (v > best_v) {
            best_v = v;
            best = k;
          }
        }
        fx[i] = disp[best].x;
        fy[i] = disp[best].y;
      }
      res.flow_x.push_back(std::move(fx));
      res.flow_y.push_back(std::move(fy));
      blobs = std::move(next);
    }
    return res;
  }

  // velocity fields
  Eigen::VectorXd ux(m), uy(m);
  for (int i = 0; i < m; ++i) {
    if (cfg.regime == Regime::AdvectionDiffusion) {
      ux[i] = vx;
      uy[i] = vy;
    } else {
      // solid-body rotation, speed `amplitude` cells/step at radius 0.25
      const Point s = g.center(i);
      const double omega = speed / 0.25;
      ux[i] = -omega * (s.y - 0.5);
      uy[i] = omega * (s.x - 0.5);
    }
  }
  Eigen::VectorXd y = GaussianNoise::matern(g, {1.0, 0.1}).sample(rng);
  for (int t = 0; t < cfg.T; ++t) {
    res.frames.emplace_back(g, y);
    if (t + 1 == cfg.T) break;
    y = bilinear_departure(g, y, ux, uy, cfg.periodic);
    if (cfg.diffusion > 0.0) y = diffuse(g, y, cfg.diffusion, cfg.periodic);
    if (forcing) y += forcing->sample(rng);
    res.flow_x.push_back(ux);
    res.flow_y.push_back(uy);
  }
  return res;
}

std::vector<Observations> sample_observations(const std::vector<Field>& truth, int per_step, double sigma2_eps,
                                              std::uint64_t seed) {
  require(sigma2_eps >= 0.0, Errc::InvalidArgument, "measurement variance must be non-negative");
  std::vector<Observations> out;
  for (std::size_t t = 0; t < truth.size(); ++t) {
    const int m = truth[t].grid.size();
    if (per_step > m || per_step < 0) {
      fail(Errc::TooManyPixels, "asked for " + std::to_string(per_step) + " pixels per step on a grid of " +
                                    std::to_string(m));
    }
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(t), 0x4f4253ULL));
    std::vector<int> idx(m);
    for (int i = 0; i < m; ++i) idx[i] = i;
    // partial Fisher-Yates
    for (int k = 0; k < per_step; ++k) {
      std::uniform_int_distribution<int> pick(k, m - 1);
      std::swap(idx[k], idx[pick(rng)]);
    }
    Observations o;
    o.t = static_cast<int>(t);
    o.sigma2_eps = sigma2_eps;
    o.pixels.assign(idx.begin(), idx.begin() + per_step);
    std::sort(o.pixels.begin(), o.pixels.end());
    const Eigen::VectorXd z = standard_normal(per_step, rng);
    o.values.resize(per_step);
    for (int k = 0; k < per_step; ++k) o.values[k] = truth[t].values[o.pixels[k]] + std::sqrt(sigma2_eps) * z[k];
    out.push_back(std::move(o));
  }
  return out;
}

}  // namespace cnnide
