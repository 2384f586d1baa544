#include "oplearn/train.hpp"

#include <algorithm>
#include <cmath>

#include "oplearn/rng.hpp"

namespace oplearn {

void Pool::add(Mat i, Mat t, std::string tg) {
  if (i.rows() != t.rows() || i.cols() != t.cols())
    throw ConfigError("pool: input/target shape mismatch");
  in.push_back(std::move(i));
  tgt.push_back(std::move(t));
  tag.push_back(std::move(tg));
}

TrainResult train_correction(ConvCorrection& model, const Pool& pool,
                             const TrainOpt& opt, AdamState* state) {
  if (pool.size() == 0) throw ConfigError("train_correction: empty pool");
  if (opt.batch < 1 || opt.epochs < 1)
    throw ConfigError("train_correction: batch and epochs must be >= 1");
  AdamState local;
  AdamState& st = state ? *state : local;
  if (st.m.size() != model.num_params()) {
    st.m = Vec::Zero(model.num_params());
    st.v = Vec::Zero(model.num_params());
    st.t = 0;
  }
  TrainResult res;
  const Index p = pool.size();
  std::vector<Index> order(static_cast<std::size_t>(p));
  for (Index i = 0; i < p; ++i) order[static_cast<std::size_t>(i)] = i;

  // divergence baseline: the starting model's loss on the very first batch,
  // taken before any update so a blowup inside epoch 0 cannot hide in it
  double baseline = -1.0;
  for (Index epoch = 0; epoch < opt.epochs; ++epoch) {
    SplitMix64 rng(derive_seed(opt.seed, static_cast<std::uint64_t>(epoch)));
    for (Index i = p - 1; i > 0; --i) {
      Index j = static_cast<Index>(rng.next() %
                                   static_cast<std::uint64_t>(i + 1));
      std::swap(order[static_cast<std::size_t>(i)],
                order[static_cast<std::size_t>(j)]);
    }
    double epoch_loss = 0.0;
    Index batches = 0;
    for (Index start = 0; start < p; start += opt.batch) {
      Index bsz = std::min(opt.batch, p - start);
      Vec grad = Vec::Zero(model.num_params());
      double loss = 0.0;
      for (Index bi = 0; bi < bsz; ++bi) {
        Index idx = order[static_cast<std::size_t>(start + bi)];
        const Mat& u = pool.in[static_cast<std::size_t>(idx)];
        const Mat& t = pool.tgt[static_cast<std::size_t>(idx)];
        Mat r = model.value(u) - t;
        loss += pool.cell_measure * r.squaredNorm();
        // d/dtheta of the batch-mean weighted MSE
        Mat w = (2.0 * pool.cell_measure / static_cast<double>(bsz)) * r;
        grad += model.param_grad(u, w);
      }
      loss /= static_cast<double>(bsz);
      if (baseline < 0.0) baseline = loss;
      epoch_loss += loss;
      ++batches;
      ++st.t;
      st.m = opt.beta1 * st.m + (1.0 - opt.beta1) * grad;
      st.v = opt.beta2 * st.v + (1.0 - opt.beta2) * grad.cwiseProduct(grad);
      double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(st.t));
      double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(st.t));
      Vec step = (st.m / bc1).cwiseQuotient(
          ((st.v / bc2).cwiseSqrt().array() + opt.adam_eps).matrix());
      model.set_params(model.params() - opt.lr * step);
    }
    epoch_loss /= static_cast<double>(batches);
    res.epoch_loss.push_back(epoch_loss);
    if (!std::isfinite(epoch_loss) ||
        epoch_loss > opt.divergence_factor * std::max(baseline, 1e-300)) {
      res.diverged = true;
      break;
    }
  }
  return res;
}

CorrectionPools build_manifold_pools(const Dataset& ds, const LinOp& atilde,
                                     const std::vector<double>& scales,
                                     bool zero_anchor) {
  if (ds.triples.empty()) throw ConfigError("build_manifold_pools: empty dataset");
  if (scales.empty())
    throw ConfigError("build_manifold_pools: need at least one scale");
  CorrectionPools pools;
  pools.fwd.cell_measure = ds.yspace.cell_measure();
  pools.adj.cell_measure = ds.xspace.cell_measure();
  pools.adj_base.cell_measure = ds.xspace.cell_measure();
  pools.nrm.cell_measure = ds.xspace.cell_measure();
  const auto& xs = ds.xspace.shape();
  const auto& ys = ds.yspace.shape();
  for (const TrainingTriple& t : ds.triples) {
    // all approximate-model applications; the accurate targets b*y and b*z
    // come straight from the stored triple, so augmentation costs no
    // accurate-model calls
    Vec ax = apply(atilde, t.x);
    Vec az = apply_adjoint(atilde, ax);
    Vec aty = apply_adjoint(atilde, t.y);
    for (std::size_t si = 0; si < scales.size(); ++si) {
      double b = scales[si];
      std::string tg = "manifold-" + std::to_string(t.id);
      if (si > 0) tg += "-s" + std::to_string(si);
      pools.fwd.add(to_grid(b * ax, ys[0], ys[1]),
                    to_grid(b * t.y, ys[0], ys[1]), tg);
      pools.ydata.push_back(to_grid(b * t.y, ys[0], ys[1]));
      // the cotangent at the start of a descent on y is r = -y
      pools.adj_base.add(to_grid(-b * aty, xs[0], xs[1]),
                         to_grid(-b * t.z, xs[0], xs[1]), tg);
      pools.nrm.add(to_grid(b * az, xs[0], xs[1]),
                    to_grid(b * t.z, xs[0], xs[1]), tg);
    }
  }
  if (zero_anchor) {
    Mat zy = Mat::Zero(ys[0], ys[1]), zx = Mat::Zero(xs[0], xs[1]);
    pools.fwd.add(zy, zy, "manifold-zero");
    pools.ydata.push_back(zy);
    pools.adj_base.add(zx, zx, "manifold-zero");
    pools.nrm.add(zx, zx, "manifold-zero");
  }
  return pools;
}

void refresh_adjoint_pool(CorrectionPools& pools, const ConvCorrection& f,
                          const LinOp& a, const LinOp& atilde) {
  pools.adj = pools.adj_base;
  const auto& xs = a.domain.shape();
  for (std::size_t i = 0; i < pools.fwd.in.size(); ++i) {
    Mat r = f.value(pools.fwd.in[i]) - pools.ydata[i];
    Vec rv = from_grid(r);
    Vec in = apply_adjoint(atilde, rv);
    Vec tg = apply_adjoint(a, rv);
    ++pools.astar_calls;
    pools.adj.add(to_grid(in, xs[0], xs[1]), to_grid(tg, xs[0], xs[1]),
                  pools.fwd.tag[i]);
  }
}

FwdAdjResult train_forward_adjoint(ConvCorrection& f, ConvCorrection& g,
                                   CorrectionPools& pools, const LinOp& a,
                                   const LinOp& atilde, const TrainOpt& opt,
                                   Index refresh_every) {
  if (refresh_every < 1)
    throw ConfigError("train_forward_adjoint: refresh_every >= 1");
  FwdAdjResult res;
  AdamState fstate, gstate;
  Index done = 0;
  Index before = pools.astar_calls;
  while (done < opt.epochs) {
    Index block = std::min(refresh_every, opt.epochs - done);
    TrainOpt o = opt;
    o.epochs = block;
    o.seed = derive_seed(opt.seed, 0xf0 + static_cast<std::uint64_t>(done));
    TrainResult fr = train_correction(f, pools.fwd, o, &fstate);
    res.fwd_loss.insert(res.fwd_loss.end(), fr.epoch_loss.begin(),
                        fr.epoch_loss.end());
    if (fr.diverged) {
      res.diverged = true;
      break;
    }
    // adjoint targets follow the current forward correction
    refresh_adjoint_pool(pools, f, a, atilde);
    o.seed = derive_seed(opt.seed, 0xad + static_cast<std::uint64_t>(done));
    TrainResult gr = train_correction(g, pools.adj, o, &gstate);
    res.adj_loss.insert(res.adj_loss.end(), gr.epoch_loss.begin(),
                        gr.epoch_loss.end());
    if (gr.diverged) {
      res.diverged = true;
      break;
    }
    done += block;
  }
  res.astar_calls = pools.astar_calls - before;
  return res;
}

TrajectoryResult trajectory_train(ConvCorrection& f, ConvCorrection& g,
                                  CorrectionPools& pools, const Dataset& ds,
                                  const LinOp& a, const LinOp& atilde,
                                  const TrajectoryOpt& topt) {
  if (topt.rounds < 1) throw ConfigError("trajectory_train: rounds >= 1");
  TrajectoryResult res;
  Index a0 = pools.a_calls, s0 = pools.astar_calls;

  // round 0: manifold-only training (skipped when the models arrive trained)
  if (topt.round0) {
    FwdAdjResult base =
        train_forward_adjoint(f, g, pools, a, atilde, topt.train,
                              topt.refresh_every);
    res.fwd_loss = base.fwd_loss;
    res.adj_loss = base.adj_loss;
    res.diverged = base.diverged;
  }
  res.pool_sizes.push_back(pools.fwd.size());

  const auto& ys = ds.yspace.shape();
  for (Index round = 1; round <= topt.rounds && !res.diverged; ++round) {
    if (topt.stride < 1) {
      // harvesting disabled: nothing changes after round 0
      res.pool_sizes.push_back(pools.fwd.size());
      continue;
    }
    for (const TrainingTriple& t : ds.triples) {
      GradOracle oracle = corrected_oracle_forward_adjoint(f, g, atilde, t.y);
      GdConfig cfg = topt.gd;
      cfg.snapshot_every = topt.stride;
      GdResult run = gd_solve(oracle, topt.tv, cfg, t.y);
      std::string tg = "trajectory-" + std::to_string(round) + "-" +
                       std::to_string(t.id);
      for (const Vec& xk : run.snapshots) {
        Vec axk = apply(atilde, xk);
        Vec true_axk = apply(a, xk);
        ++pools.a_calls;
        pools.fwd.add(to_grid(axk, ys[0], ys[1]),
                      to_grid(true_axk, ys[0], ys[1]), tg);
        pools.ydata.push_back(to_grid(t.y, ys[0], ys[1]));
      }
    }
    res.pool_sizes.push_back(pools.fwd.size());
    TrainOpt o = topt.train;
    o.seed = derive_seed(topt.train.seed, 0x7a000 + static_cast<std::uint64_t>(round));
    FwdAdjResult r = train_forward_adjoint(f, g, pools, a, atilde, o,
                                           topt.refresh_every);
    res.fwd_loss.insert(res.fwd_loss.end(), r.fwd_loss.begin(),
                        r.fwd_loss.end());
    res.adj_loss.insert(res.adj_loss.end(), r.adj_loss.begin(),
                        r.adj_loss.end());
    res.diverged = r.diverged;
  }
  res.a_calls = pools.a_calls - a0;
  res.astar_calls = pools.astar_calls - s0;
  return res;
}

}  // namespace oplearn
