#pragma once

#include <string>
#include <utility>
#include <vector>

#include "sscd/nn.hpp"

namespace sscd {

enum class BackboneKind { tiny, resnet50 };

inline const char* to_string(BackboneKind k) {
  return k == BackboneKind::tiny ? "tiny" : "resnet50";
}

// Architecture description for the siamese encoder and its decoders. The tiny
// kind is a five-conv ladder small enough for CPU training and gradient
// checking; resnet50 is the full-scale four-stage residual layout.
struct BackboneConfig {
  BackboneKind kind = BackboneKind::tiny;
  std::uint64_t init_seed = 0;

  // tiny ladder: stem1, stem2 (stage-1 tap), stage2..stage4 (stage-4 tap),
  // each at stride 2.
  std::vector<int> tiny_widths = {8, 12, 16, 24, 32};
  int tiny_decoder_width = 12;
  int tiny_reduce_width = 6;

  int rn50_decoder_width = 256;
  int rn50_reduce_width = 48;

  std::vector<int> aspp_rates = {6, 12, 18};

  int stride_s1() const { return 4; }
  int stride_s4() const { return 32; }

  int c1() const { return kind == BackboneKind::tiny ? tiny_widths[1] : 256; }
  int c4() const { return kind == BackboneKind::tiny ? tiny_widths[4] : 2048; }
  int decoder_width() const {
    return kind == BackboneKind::tiny ? tiny_decoder_width : rn50_decoder_width;
  }
  int reduce_width() const {
    return kind == BackboneKind::tiny ? tiny_reduce_width : rn50_reduce_width;
  }
};

namespace nn {

template <class T>
struct Bottleneck {
  Conv2d<T> c1, c2, c3, cd;
  BatchNorm2d<T> b1, b2, b3, bd;
  bool has_down = false;

  Bottleneck() = default;
  Bottleneck(ParamStore<T>& ps, const std::string& name, int in_c, int mid_c,
             int out_c, int stride) {
    c1 = Conv2d<T>(ps, name + ".c1", in_c, mid_c, 1, 1, 0, 1, false);
    b1 = BatchNorm2d<T>(ps, name + ".b1", mid_c);
    c2 = Conv2d<T>(ps, name + ".c2", mid_c, mid_c, 3, stride, 1, 1, false);
    b2 = BatchNorm2d<T>(ps, name + ".b2", mid_c);
    c3 = Conv2d<T>(ps, name + ".c3", mid_c, out_c, 1, 1, 0, 1, false);
    b3 = BatchNorm2d<T>(ps, name + ".b3", out_c);
    has_down = (stride != 1 || in_c != out_c);
    if (has_down) {
      cd = Conv2d<T>(ps, name + ".cd", in_c, out_c, 1, stride, 0, 1, false);
      bd = BatchNorm2d<T>(ps, name + ".bd", out_c);
    }
  }

  Var<T> operator()(const Var<T>& x, bool training) const {
    auto y = ag::relu(b1(c1(x), training));
    y = ag::relu(b2(c2(y), training));
    y = b3(c3(y), training);
    auto skip = has_down ? bd(cd(x), training) : x;
    return ag::relu(ag::add(y, skip));
  }
};

template <class T>
struct Aspp {
  ConvBnRelu<T> branch1x1;
  std::vector<ConvBnRelu<T>> dilated;
  ConvBnRelu<T> pool_conv;
  ConvBnRelu<T> project;

  Aspp() = default;
  Aspp(ParamStore<T>& ps, const std::string& name, int in_c, int width,
       const std::vector<int>& rates) {
    branch1x1 = ConvBnRelu<T>(ps, name + ".b0", in_c, width, 1);
    for (std::size_t i = 0; i < rates.size(); ++i)
      dilated.emplace_back(ps, name + ".b" + std::to_string(i + 1), in_c, width,
                           3, 1, rates[i]);
    pool_conv = ConvBnRelu<T>(ps, name + ".pool", in_c, width, 1);
    project = ConvBnRelu<T>(
        ps, name + ".proj",
        width * static_cast<int>(2 + rates.size()), width, 1);
  }

  Var<T> operator()(const Var<T>& x, bool training) const {
    const int h = x->value.shape(2), w = x->value.shape(3);
    std::vector<Var<T>> parts;
    parts.push_back(branch1x1(x, training));
    for (const auto& d : dilated) parts.push_back(d(x, training));
    auto pooled = pool_conv(ag::global_avg_pool(x), training);
    parts.push_back(ag::upsample_bilinear(pooled, h, w));
    return project(ag::concat_channels(parts), training);
  }
};

// F4 = ASPP(D4); F1 = CBR3(CBR3([Up(F4), CBR1(D1)])); logits = Conv1(F1),
// computed at D1 resolution and upsampled to the requested output size.
template <class T>
struct DecoderHead {
  Aspp<T> aspp;
  ConvBnRelu<T> reduce;
  ConvBnRelu<T> fuse1, fuse2;
  Conv2d<T> head;

  DecoderHead() = default;
  DecoderHead(ParamStore<T>& ps, const std::string& name,
              const BackboneConfig& cfg) {
    const int w = cfg.decoder_width();
    aspp = Aspp<T>(ps, name + ".aspp", cfg.c4(), w, cfg.aspp_rates);
    reduce = ConvBnRelu<T>(ps, name + ".reduce", cfg.c1(), cfg.reduce_width(), 1);
    fuse1 = ConvBnRelu<T>(ps, name + ".fuse1", w + cfg.reduce_width(), w, 3);
    fuse2 = ConvBnRelu<T>(ps, name + ".fuse2", w, w, 3);
    head = Conv2d<T>(ps, name + ".head", w, 2, 1, 1, 0, 1, /*bias=*/true);
  }

  Var<T> operator()(const Var<T>& d4, const Var<T>& d1, int out_h, int out_w,
                    bool training) const {
    const int h1 = d1->value.shape(2), w1 = d1->value.shape(3);
    auto f4 = ag::upsample_bilinear(aspp(d4, training), h1, w1);
    auto f1 = fuse2(fuse1(ag::concat_channels<T>({f4, reduce(d1, training)}),
                          training),
                    training);
    auto logits = head(f1);
    if (out_h != h1 || out_w != w1)
      logits = ag::upsample_bilinear(logits, out_h, out_w);
    return logits;
  }
};

}  // namespace nn

// Elementwise |a - b|; shared weights upstream make this symmetric in its
// arguments up to ordering of the returned tuple.
template <class T>
Tensor<T> difference_features(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "difference_features");
  Tensor<T> out(a.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = std::abs(a[i] - b[i]);
  return out;
}

// Change-class probability from 2-channel logits, softmax over channel dim.
template <class T>
Tensor<T> change_probability(const Tensor<T>& logits) {
  const auto& s = logits.shape();
  if (s.size() != 4 || s[1] != 2)
    throw std::invalid_argument("change_probability: expects (N,2,H,W)");
  const int n = s[0], h = s[2], w = s[3];
  Tensor<T> out({n, h, w});
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  for (int b = 0; b < n; ++b) {
    const T* z0 = logits.data() + (static_cast<std::int64_t>(b) * 2) * plane;
    const T* z1 = z0 + plane;
    T* dst = out.data() + b * plane;
    for (std::int64_t i = 0; i < plane; ++i) {
      const double m = std::max<double>(z0[i], z1[i]);
      const double e0 = std::exp(z0[i] - m), e1 = std::exp(z1[i] - m);
      dst[i] = static_cast<T>(e1 / (e0 + e1));
    }
  }
  return out;
}

// The change-detection network: one siamese encoder, a main decoder, a gate
// decoder of identical architecture, and K auxiliary decoders for the
// feature-perturbation branches.
template <class T>
class ChangeDetector {
public:
  using Var = ag::Var<T>;

  ChangeDetector(const BackboneConfig& cfg, int aux_branches)
      : cfg_(cfg), store_(cfg.init_seed), aux_count_(aux_branches) {
    build_encoder();
    main_ = nn::DecoderHead<T>(store_, "dec.main", cfg_);
    gate_ = nn::DecoderHead<T>(store_, "dec.gate", cfg_);
    for (int k = 0; k < aux_branches; ++k)
      aux_.emplace_back(store_, "dec.aux" + std::to_string(k), cfg_);
  }

  const BackboneConfig& config() const { return cfg_; }
  nn::ParamStore<T>& params() { return store_; }
  const nn::ParamStore<T>& params() const { return store_; }
  int aux_count() const { return aux_count_; }

  struct StageFeatures {
    Var c1, c4;
  };

  // Both images of a pair go through the same weights.
  StageFeatures encode(const Var& x, bool training) {
    const auto& s = x->value.shape();
    if (s.size() != 4 || s[1] != 3)
      throw std::invalid_argument("encode: expects (N,3,H,W)");
    if (s[2] % cfg_.stride_s4() != 0 || s[3] % cfg_.stride_s4() != 0)
      throw std::invalid_argument(
          "encode: H and W must be divisible by " +
          std::to_string(cfg_.stride_s4()) + ", got " + x->value.shape_str());
    if (cfg_.kind == BackboneKind::tiny) return encode_tiny(x, training);
    return encode_resnet50(x, training);
  }

  struct Bundle {
    Var d1, d4;
    int in_h = 0, in_w = 0;
  };

  Bundle difference(const Var& xa, const Var& xb, bool training) {
    check_same_shape(xa->value, xb->value, "difference");
    auto fa = encode(xa, training);
    auto fb = encode(xb, training);
    Bundle out;
    out.d1 = ag::abs_diff(fa.c1, fb.c1);
    out.d4 = ag::abs_diff(fa.c4, fb.c4);
    out.in_h = xa->value.shape(2);
    out.in_w = xa->value.shape(3);
    return out;
  }

  Var decode_main(const Bundle& b, bool training) {
    return main_(b.d4, b.d1, b.in_h, b.in_w, training);
  }
  Var decode_gate(const Bundle& b, bool training) {
    return gate_(b.d4, b.d1, b.in_h, b.in_w, training);
  }
  Var decode_aux(int k, const Var& d4, const Var& d1, int out_h, int out_w,
                 bool training) {
    if (k < 0 || k >= aux_count_)
      throw std::out_of_range("decode_aux: branch " + std::to_string(k) +
                              " of " + std::to_string(aux_count_));
    return aux_[static_cast<std::size_t>(k)](d4, d1, out_h, out_w, training);
  }

  // Full forward pass to a per-pixel change probability, tape-free.
  Tensor<T> forward_prob(const Tensor<T>& image_a, const Tensor<T>& image_b,
                         bool training = false) {
    ag::NoGradGuard guard;
    auto xa = ag::constant(image_a);
    auto xb = ag::constant(image_b);
    auto bundle = difference(xa, xb, training);
    auto logits = decode_main(bundle, training);
    if (!logits->value.all_finite())
      throw std::runtime_error("forward_prob: non-finite logits");
    return change_probability(logits->value);
  }

  std::int64_t encoder_param_count() const {
    return store_.count_params_with_prefix("enc.");
  }
  std::int64_t decoder_param_count(const std::string& which) const {
    return store_.count_params_with_prefix("dec." + which + ".");
  }
  // Deployed network: encoder + main decoder + gate decoder. The auxiliary
  // decoders are training-time scaffolding and excluded from this count.
  std::int64_t deployed_param_count() const {
    return encoder_param_count() + decoder_param_count("main") +
           decoder_param_count("gate");
  }

private:
  void build_encoder() {
    if (cfg_.kind == BackboneKind::tiny) {
      const auto& w = cfg_.tiny_widths;
      if (w.size() != 5)
        throw std::invalid_argument("tiny backbone needs 5 stage widths");
      tiny_.clear();
      int in_c = 3;
      for (std::size_t i = 0; i < w.size(); ++i) {
        tiny_.emplace_back(store_, "enc.s" + std::to_string(i), in_c, w[i], 3, 2);
        in_c = w[i];
      }
      return;
    }
    stem_conv_ = nn::Conv2d<T>(store_, "enc.stem.conv", 3, 64, 7, 2, 3, 1, false);
    stem_bn_ = nn::BatchNorm2d<T>(store_, "enc.stem.bn", 64);
    const int blocks[4] = {3, 4, 6, 3};
    const int mids[4] = {64, 128, 256, 512};
    int in_c = 64;
    for (int stage = 0; stage < 4; ++stage) {
      const int out_c = mids[stage] * 4;
      for (int blk = 0; blk < blocks[stage]; ++blk) {
        const int stride = (stage > 0 && blk == 0) ? 2 : 1;
        rn_blocks_.emplace_back(store_,
                                "enc.layer" + std::to_string(stage + 1) + "." +
                                    std::to_string(blk),
                                in_c, mids[stage], out_c, stride);
        in_c = out_c;
      }
      rn_stage_end_[stage] = static_cast<int>(rn_blocks_.size());
    }
  }

  StageFeatures encode_tiny(const Var& x, bool training) {
    auto y = x;
    StageFeatures f;
    for (std::size_t i = 0; i < tiny_.size(); ++i) {
      y = tiny_[i](y, training);
      if (i == 1) f.c1 = y;
    }
    f.c4 = y;
    return f;
  }

  StageFeatures encode_resnet50(const Var& x, bool training) {
    auto y = ag::relu(stem_bn_(stem_conv_(x), training));
    y = ag::max_pool(y, 3, 2, 1);
    StageFeatures f;
    for (std::size_t i = 0; i < rn_blocks_.size(); ++i) {
      y = rn_blocks_[i](y, training);
      if (static_cast<int>(i) + 1 == rn_stage_end_[0]) f.c1 = y;
    }
    f.c4 = y;
    return f;
  }

  BackboneConfig cfg_;
  nn::ParamStore<T> store_;
  int aux_count_;

  std::vector<nn::ConvBnRelu<T>> tiny_;
  nn::Conv2d<T> stem_conv_;
  nn::BatchNorm2d<T> stem_bn_;
  std::vector<nn::Bottleneck<T>> rn_blocks_;
  int rn_stage_end_[4] = {0, 0, 0, 0};

  nn::DecoderHead<T> main_, gate_;
  std::vector<nn::DecoderHead<T>> aux_;
};

}  // namespace sscd
