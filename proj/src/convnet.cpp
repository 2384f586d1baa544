#include "oplearn/convnet.hpp"

#include <cmath>
#include <fstream>

#include "oplearn/binio.hpp"
#include "oplearn/rng.hpp"

namespace oplearn {

namespace {

constexpr Index kK = 5;  // kernel side
constexpr Index kPad = 2;
constexpr Index kKK = kK * kK;

// patch matrix: row p = flat pixel (r + c*H), block ci holds the 5x5
// neighbourhood of channel ci around p, zero outside the field
Mat im2col(const std::vector<Mat>& in) {
  const Index h = in[0].rows(), w = in[0].cols();
  const Index cin = static_cast<Index>(in.size());
  Mat p = Mat::Zero(h * w, kKK * cin);
  for (Index ci = 0; ci < cin; ++ci) {
    const Mat& f = in[static_cast<std::size_t>(ci)];
    for (Index du = -kPad; du <= kPad; ++du)
      for (Index dv = -kPad; dv <= kPad; ++dv) {
        Index t = ci * kKK + (du + kPad) * kK + (dv + kPad);
        Index r0 = std::max<Index>(0, -du), r1 = std::min(h, h - du);
        Index c0 = std::max<Index>(0, -dv), c1 = std::min(w, w - dv);
        for (Index c = c0; c < c1; ++c)
          p.block(r0 + c * h, t, r1 - r0, 1) =
              f.block(r0 + du, c + dv, r1 - r0, 1);
      }
  }
  return p;
}

std::vector<Mat> split_channels(const Mat& m, Index h, Index w) {
  std::vector<Mat> out(static_cast<std::size_t>(m.cols()));
  for (Index co = 0; co < m.cols(); ++co)
    out[static_cast<std::size_t>(co)] =
        Eigen::Map<const Mat>(m.col(co).data(), h, w);
  return out;
}

Mat merge_channels(const std::vector<Mat>& ch) {
  const Index h = ch[0].rows(), w = ch[0].cols();
  Mat m(h * w, static_cast<Index>(ch.size()));
  for (std::size_t i = 0; i < ch.size(); ++i)
    m.col(static_cast<Index>(i)) =
        Eigen::Map<const Vec>(ch[i].data(), h * w);
  return m;
}

// kernel with source/target channels swapped and taps flipped; convolving
// with it is the exact transpose of the forward convolution
Mat transpose_kernel(const Mat& w, Index cin, Index cout) {
  Mat t(kKK * cout, cin);
  for (Index ci = 0; ci < cin; ++ci)
    for (Index co = 0; co < cout; ++co)
      for (Index tu = 0; tu < kK; ++tu)
        for (Index tv = 0; tv < kK; ++tv)
          t(co * kKK + tu * kK + tv, ci) =
              w(ci * kKK + (kK - 1 - tu) * kK + (kK - 1 - tv), co);
  return t;
}

std::vector<Mat> conv(const std::vector<Mat>& in, const Mat& w, const Vec& b) {
  Mat p = im2col(in);
  Mat out = p * w;
  out.rowwise() += b.transpose();
  return split_channels(out, in[0].rows(), in[0].cols());
}

void lrelu_inplace(std::vector<Mat>& ch, double slope) {
  for (Mat& m : ch)
    m = m.unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; });
}

// derivative mask applied to a cotangent, using the pre-activation values
void lrelu_backward(std::vector<Mat>& cot, const std::vector<Mat>& pre,
                    double slope) {
  for (std::size_t i = 0; i < cot.size(); ++i)
    cot[i] = cot[i].binaryExpr(pre[i], [slope](double c, double v) {
      return v > 0.0 ? c : slope * c;
    });
}

}  // namespace

ConvCorrection::ConvCorrection(Index hidden, double slope, std::uint64_t seed)
    : hidden_(hidden), slope_(slope) {
  if (hidden < 1) throw ConfigError("correction model: hidden channels >= 1");
  SplitMix64 rng(seed);
  auto init = [&](Index cin, Index cout, double extra) {
    Layer l;
    l.w.resize(kKK * cin, cout);
    double sd = std::sqrt(2.0 / static_cast<double>(kKK * cin)) * extra;
    for (Index i = 0; i < l.w.size(); ++i) l.w.data()[i] = sd * rng.normal();
    l.b = Vec::Zero(cout);
    return l;
  };
  layers_.push_back(init(1, hidden_, 1.0));
  layers_.push_back(init(hidden_, hidden_, 1.0));
  layers_.push_back(init(hidden_, 1, 1e-2));  // keeps the start near identity
}

// returns {input, pre1, pre2, pre3}; activations are recomputed from the
// pre-activation values where needed
std::vector<std::vector<Mat>> ConvCorrection::forward_pass(const Mat& u) const {
  std::vector<std::vector<Mat>> acts;
  acts.push_back({u});
  std::vector<Mat> a = conv(acts[0], layers_[0].w, layers_[0].b);
  acts.push_back(a);
  lrelu_inplace(a, slope_);
  a = conv(a, layers_[1].w, layers_[1].b);
  acts.push_back(a);
  lrelu_inplace(a, slope_);
  a = conv(a, layers_[2].w, layers_[2].b);
  acts.push_back(a);
  return acts;
}

Mat ConvCorrection::value(const Mat& u) const {
  auto acts = forward_pass(u);
  return u + acts[3][0];
}

Mat ConvCorrection::input_vjp(const Mat& u, const Mat& w) const {
  if (w.rows() != u.rows() || w.cols() != u.cols())
    throw ConfigError("input_vjp: cotangent shape mismatch");
  auto acts = forward_pass(u);
  std::vector<Mat> cot = {w};
  cot = conv(cot, transpose_kernel(layers_[2].w, hidden_, 1), Vec::Zero(hidden_));
  lrelu_backward(cot, acts[2], slope_);
  cot = conv(cot, transpose_kernel(layers_[1].w, hidden_, hidden_),
             Vec::Zero(hidden_));
  lrelu_backward(cot, acts[1], slope_);
  cot = conv(cot, transpose_kernel(layers_[0].w, 1, hidden_), Vec::Zero(1));
  return w + cot[0];
}

Vec ConvCorrection::param_grad(const Mat& u, const Mat& w) const {
  if (w.rows() != u.rows() || w.cols() != u.cols())
    throw ConfigError("param_grad: cotangent shape mismatch");
  auto acts = forward_pass(u);
  std::vector<Mat> act1 = acts[1];
  lrelu_inplace(act1, slope_);
  std::vector<Mat> act2 = acts[2];
  lrelu_inplace(act2, slope_);

  Vec g = Vec::Zero(num_params());
  Index off = 0;
  auto emit = [&](const std::vector<Mat>& in, const std::vector<Mat>& cot,
                  const Layer& l) {
    Mat p = im2col(in);
    Mat cm = merge_channels(cot);
    Mat gw = p.transpose() * cm;
    g.segment(off, gw.size()) = Eigen::Map<const Vec>(gw.data(), gw.size());
    off += gw.size();
    g.segment(off, l.b.size()) = cm.colwise().sum().transpose();
    off += l.b.size();
  };

  // cotangents flowing into each conv output
  std::vector<Mat> cot3 = {w};
  std::vector<Mat> cot2 =
      conv(cot3, transpose_kernel(layers_[2].w, hidden_, 1), Vec::Zero(hidden_));
  lrelu_backward(cot2, acts[2], slope_);
  std::vector<Mat> cot1 =
      conv(cot2, transpose_kernel(layers_[1].w, hidden_, hidden_),
           Vec::Zero(hidden_));
  lrelu_backward(cot1, acts[1], slope_);

  emit(acts[0], cot1, layers_[0]);
  emit(act1, cot2, layers_[1]);
  emit(act2, cot3, layers_[2]);
  return g;
}

Vec ConvCorrection::params() const {
  Vec p(num_params());
  Index off = 0;
  for (const Layer& l : layers_) {
    p.segment(off, l.w.size()) = Eigen::Map<const Vec>(l.w.data(), l.w.size());
    off += l.w.size();
    p.segment(off, l.b.size()) = l.b;
    off += l.b.size();
  }
  return p;
}

void ConvCorrection::set_params(const Vec& p) {
  if (p.size() != num_params())
    throw ConfigError("set_params: expected " + std::to_string(num_params()) +
                      " parameters, got " + std::to_string(p.size()));
  Index off = 0;
  for (Layer& l : layers_) {
    l.w = Eigen::Map<const Mat>(p.data() + off, l.w.rows(), l.w.cols());
    off += l.w.size();
    l.b = p.segment(off, l.b.size());
    off += l.b.size();
  }
}

Index ConvCorrection::num_params() const {
  Index n = 0;
  for (const Layer& l : layers_) n += l.w.size() + l.b.size();
  return n;
}

std::string ConvCorrection::descriptor() const {
  return "resconv5x5-1-" + std::to_string(hidden_) + "-" +
         std::to_string(hidden_) + "-1-lrelu" + std::to_string(slope_);
}

ConvCorrection model_build(std::uint64_t seed, Index hidden, double slope) {
  return ConvCorrection(hidden, slope, seed);
}

void save_model(const std::string& path, const ConvCorrection& m,
                std::uint64_t fingerprint) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path);
  const char magic[4] = {'O', 'P', 'D', 'S'};
  put_bytes(os, magic, 4);
  put_u16(os, 1);
  put_u64(os, fingerprint);
  std::string desc = m.descriptor();
  put_u64(os, desc.size());
  put_bytes(os, desc.data(), desc.size());
  Vec p = m.params();
  put_u64(os, static_cast<std::uint64_t>(p.size()));
  for (Index i = 0; i < p.size(); ++i) put_f64(os, p[i]);
  if (!os) throw IoError("write failed: " + path);
}

ConvCorrection load_model(const std::string& path,
                          std::uint64_t expect_fingerprint) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  char magic[4];
  get_bytes(is, magic, 4, "magic");
  if (std::memcmp(magic, "OPDS", 4) != 0)
    throw IoError(path + ": bad magic, not a model checkpoint");
  if (get_u16(is, "version") != 1)
    throw IoError(path + ": unsupported version");
  std::uint64_t fp = get_u64(is, "fingerprint");
  if (fp != expect_fingerprint)
    throw IoError(path + ": fingerprint mismatch, file " + std::to_string(fp) +
                  " vs expected " + std::to_string(expect_fingerprint));
  std::uint64_t dlen = get_u64(is, "descriptor length");
  std::string desc(dlen, '\0');
  get_bytes(is, desc.data(), dlen, "descriptor");
  ConvCorrection m = model_build(0);
  if (desc != m.descriptor())
    throw IoError(path + ": architecture descriptor '" + desc +
                  "' not supported by this build (expected '" +
                  m.descriptor() + "')");
  std::uint64_t np = get_u64(is, "parameter count");
  if (np != static_cast<std::uint64_t>(m.num_params()))
    throw IoError(path + ": parameter count " + std::to_string(np) +
                  " does not match architecture (" +
                  std::to_string(m.num_params()) + ")");
  Vec p(static_cast<Index>(np));
  for (Index i = 0; i < p.size(); ++i) p[i] = get_f64(is, "parameters");
  m.set_params(p);
  return m;
}

}  // namespace oplearn
