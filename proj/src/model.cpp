// Copyright 2026 The mdshare Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "mdl/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include <json.hpp>

#include "mdl/kernels.hpp"
#include "mdl/rng.hpp"

namespace mdl::mdnet {

using nlohmann::json;
namespace as = mdl::archspec;

namespace {

constexpr std::uint32_t kContainerVersion = 1;
constexpr char kMagic[4] = {'M', 'D', 'C', 'K'};

std::size_t filter_row_len(const as::ConvLayerSpec& l) {
  return static_cast<std::size_t>(l.in_channels / l.groups) * l.kernel_h *
         l.kernel_w;
}

std::string layer_filter_name(const std::string& prefix, int layer, int f) {
  return prefix + "/L" + std::to_string(layer) + "/f" + std::to_string(f);
}

}  // namespace

const Tensor* TensorContainer::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

MultiDomainModel MultiDomainModel::assemble(as::ArchitectureSpec arch,
                                            planner::SharingPlan plan,
                                            std::vector<as::HeadSpec> heads,
                                            std::uint64_t init_seed) {
  arch.validate();
  planner::validate_plan(plan, arch);
  if (heads.empty()) throw SpecError("assemble: no heads given");

  MultiDomainModel model;
  model.arch_ = std::move(arch);
  model.plan_ = std::move(plan);

  std::set<std::string> seen;
  for (const auto& head : heads) {
    if (head.domain_id.empty())
      throw SpecError("assemble: empty domain_id");
    if (head.num_classes < 2)
      throw SpecError("head '" + head.domain_id +
                      "': num_classes must be >= 2");
    if (!seen.insert(head.domain_id).second)
      throw SpecError("duplicate domain_id '" + head.domain_id + "'");
    model.domain_ids_.push_back(head.domain_id);
  }

  const auto& a = model.arch_;
  for (const auto& l : a.layers) {
    LayerStore store;
    const std::vector<std::size_t> wshape{
        static_cast<std::size_t>(l.out_channels),
        static_cast<std::size_t>(l.in_channels / l.groups),
        static_cast<std::size_t>(l.kernel_h),
        static_cast<std::size_t>(l.kernel_w)};
    store.w = Tensor(wshape);
    store.gw = Tensor(wshape);
    store.mw = Tensor(wshape);
    if (l.has_bias) {
      store.b = Tensor({static_cast<std::size_t>(l.out_channels)});
      store.gb = Tensor({static_cast<std::size_t>(l.out_channels)});
      store.mb = Tensor({static_cast<std::size_t>(l.out_channels)});
    }
    model.shared_.push_back(std::move(store));
  }

  for (const auto& head : heads) {
    DomainOverlay overlay;
    overlay.head_spec = head;
    for (const auto& [layer_id, filters] : model.plan_.selection) {
      const auto& l = a.layers[layer_id];
      LayerStore store;
      const std::vector<std::size_t> wshape{
          filters.size(), static_cast<std::size_t>(l.in_channels / l.groups),
          static_cast<std::size_t>(l.kernel_h),
          static_cast<std::size_t>(l.kernel_w)};
      store.w = Tensor(wshape);
      store.gw = Tensor(wshape);
      store.mw = Tensor(wshape);
      if (l.has_bias) {
        store.b = Tensor({filters.size()});
        store.gb = Tensor({filters.size()});
        store.mb = Tensor({filters.size()});
      }
      overlay.specific.emplace(layer_id, std::move(store));
    }
    for (const auto& site : a.bn_sites) {
      BnStore bn;
      const std::vector<std::size_t> shape{
          static_cast<std::size_t>(site.num_features)};
      bn.gamma = Tensor(shape);
      bn.beta = Tensor(shape);
      bn.running_mean = Tensor(shape);
      bn.running_var = Tensor(shape);
      bn.dgamma = Tensor(shape);
      bn.dbeta = Tensor(shape);
      bn.mgamma = Tensor(shape);
      bn.mbeta = Tensor(shape);
      overlay.bn.emplace(site.layer_id, std::move(bn));
    }
    const std::size_t classes = head.num_classes;
    const std::size_t feat = a.head_in_features;
    overlay.head.w = Tensor({classes, feat});
    overlay.head.gw = Tensor({classes, feat});
    overlay.head.mw = Tensor({classes, feat});
    overlay.head.b = Tensor({classes});
    overlay.head.gb = Tensor({classes});
    overlay.head.mb = Tensor({classes});
    model.overlays_.emplace(head.domain_id, std::move(overlay));
  }

  model.default_init(init_seed);
  return model;
}

const DomainOverlay& MultiDomainModel::overlay(
    const std::string& domain_id) const {
  auto it = overlays_.find(domain_id);
  if (it == overlays_.end())
    throw SpecError("unknown domain_id '" + domain_id + "'");
  return it->second;
}

DomainOverlay& MultiDomainModel::overlay(const std::string& domain_id) {
  auto it = overlays_.find(domain_id);
  if (it == overlays_.end())
    throw SpecError("unknown domain_id '" + domain_id + "'");
  return it->second;
}

void MultiDomainModel::default_init(std::uint64_t seed) {
  for (const auto& l : arch_.layers) {
    auto& store = shared_[l.layer_id];
    Rng rng = derive_rng(seed, "init/shared/L" + std::to_string(l.layer_id));
    const float fan_in = static_cast<float>(filter_row_len(l));
    const float stddev = std::sqrt(2.0f / fan_in);
    for (auto& v : store.w.flat()) v = rng.normal_float(0.0f, stddev);
    if (!store.b.empty()) store.b.zero();
  }
  for (auto& [domain_id, overlay] : overlays_) {
    Rng rng = derive_rng(seed, "init/domain/" + domain_id + "/head");
    for (auto& v : overlay.head.w.flat()) v = rng.normal_float(0.0f, 0.01f);
    overlay.head.b.zero();
  }
  reset_bn();
  copy_shared_to_specific();
  zero_momentum();
}

void MultiDomainModel::copy_shared_to_specific() {
  for (auto& [domain_id, overlay] : overlays_) {
    for (auto& [layer_id, store] : overlay.specific) {
      const auto& l = arch_.layers[layer_id];
      const auto& filters = *plan_.selected_in(layer_id);
      const std::size_t row = filter_row_len(l);
      for (std::size_t pos = 0; pos < filters.size(); ++pos) {
        std::memcpy(store.w.data() + pos * row,
                    shared_[layer_id].w.data() + filters[pos] * row,
                    row * sizeof(float));
        if (!store.b.empty()) store.b[pos] = shared_[layer_id].b[filters[pos]];
      }
    }
  }
}

void MultiDomainModel::reset_bn() {
  for (auto& [domain_id, overlay] : overlays_) {
    for (auto& [layer_id, bn] : overlay.bn) {
      bn.gamma.fill(1.0f);
      bn.beta.zero();
      bn.running_mean.zero();
      bn.running_var.fill(1.0f);
    }
  }
}

void MultiDomainModel::zero_momentum() {
  for (auto& store : shared_) {
    store.mw.zero();
    if (!store.mb.empty()) store.mb.zero();
  }
  for (auto& [domain_id, overlay] : overlays_) {
    for (auto& [layer_id, store] : overlay.specific) {
      store.mw.zero();
      if (!store.mb.empty()) store.mb.zero();
    }
    for (auto& [layer_id, bn] : overlay.bn) {
      bn.mgamma.zero();
      bn.mbeta.zero();
    }
    overlay.head.mw.zero();
    overlay.head.mb.zero();
  }
}

ops::ConvGeom MultiDomainModel::geom_for(int layer_id) const {
  const auto& l = arch_.layers[layer_id];
  const as::FeatureShape in = as::feature_shape_after(arch_, layer_id - 1);
  ops::ConvGeom g;
  g.in_c = l.in_channels;
  g.out_c = l.out_channels;
  g.kernel_h = l.kernel_h;
  g.kernel_w = l.kernel_w;
  g.stride = l.stride;
  g.padding = l.padding;
  g.groups = l.groups;
  g.in_h = in.height;
  g.in_w = in.width;
  return g;
}

Tensor MultiDomainModel::forward_train(const std::string& domain_id,
                                       const Tensor& x, Tape& tape) {
  tape = Tape{};
  tape.domain_id = domain_id;
  return forward_impl(domain_id, x, /*train=*/true, &tape);
}

Tensor MultiDomainModel::forward_eval(const std::string& domain_id,
                                      const Tensor& x) const {
  return forward_impl(domain_id, x, /*train=*/false, nullptr);
}

Tensor MultiDomainModel::forward_impl(const std::string& domain_id,
                                      const Tensor& x, bool train,
                                      Tape* tape) const {
  const DomainOverlay& dom = overlay(domain_id);
  if (x.rank() != 4 || static_cast<int>(x.dim(1)) != arch_.input.channels ||
      static_cast<int>(x.dim(2)) != arch_.input.height ||
      static_cast<int>(x.dim(3)) != arch_.input.width) {
    throw ShapeError("forward: input " + x.shape_str() +
                     " does not match architecture input [N," +
                     std::to_string(arch_.input.channels) + "," +
                     std::to_string(arch_.input.height) + "," +
                     std::to_string(arch_.input.width) + "]");
  }
  const std::size_t n = x.dim(0);

  ops::Workspace ws;
  std::vector<Tensor> local_block;
  std::vector<Tensor>& block_out = tape ? tape->block_out : local_block;
  if (tape) tape->input = x;

  const Tensor* cur = &x;
  for (const auto& l : arch_.layers) {
    const ops::ConvGeom g = geom_for(l.layer_id);
    const std::size_t oh = g.out_h(), ow = g.out_w();

    // Splice the domain's specific filters over the shared values.
    Tensor eff_w = shared_[l.layer_id].w;
    Tensor eff_b = shared_[l.layer_id].b;
    if (const auto* sel = plan_.selected_in(l.layer_id)) {
      const auto& spec = dom.specific.at(l.layer_id);
      const std::size_t row = filter_row_len(l);
      for (std::size_t pos = 0; pos < sel->size(); ++pos) {
        std::memcpy(eff_w.data() + (*sel)[pos] * row,
                    spec.w.data() + pos * row, row * sizeof(float));
        if (!eff_b.empty()) eff_b[(*sel)[pos]] = spec.b[pos];
      }
    }

    Tensor conv_out({n, static_cast<std::size_t>(l.out_channels), oh, ow});
    ops::conv2d_forward(*cur, eff_w, eff_b, g, conv_out, ws);

    Tensor t = conv_out;
    if (const auto* site = arch_.bn_for_layer(l.layer_id)) {
      const BnStore& bn = dom.bn.at(site->layer_id);
      Tensor y(t.shape());
      if (train) {
        Tensor mean({t.dim(1)}), invstd({t.dim(1)});
        // Running statistics belong to the active domain; only its training
        // batches move them.
        auto& mutable_bn = const_cast<MultiDomainModel*>(this)
                               ->overlay(domain_id)
                               .bn.at(site->layer_id);
        ops::bn_forward_train(t, bn.gamma, bn.beta, mutable_bn.running_mean,
                              mutable_bn.running_var, kBnMomentum, kBnEps, y,
                              mean, invstd);
        tape->bn_mean.emplace(l.layer_id, std::move(mean));
        tape->bn_invstd.emplace(l.layer_id, std::move(invstd));
      } else {
        ops::bn_forward_eval(t, bn.gamma, bn.beta, bn.running_mean,
                             bn.running_var, kBnEps, y);
      }
      t = std::move(y);
    }

    if (l.residual_from) {
      kernels::add(block_out[*l.residual_from].data(), t.data(), t.numel());
    }

    Tensor act = t;
    if (l.activation == "relu") {
      Tensor y(t.shape());
      ops::relu_forward(t, y);
      act = std::move(y);
    }

    Tensor block = act;
    if (l.post_pool == "avg2") {
      Tensor y({n, act.dim(1), act.dim(2) / 2, act.dim(3) / 2});
      ops::avgpool2_forward(act, y);
      block = std::move(y);
    }

    if (tape) {
      tape->eff_w.push_back(std::move(eff_w));
      tape->eff_b.push_back(std::move(eff_b));
      tape->conv_out.push_back(std::move(conv_out));
      tape->act_out.push_back(std::move(act));
    }
    block_out.push_back(std::move(block));
    cur = &block_out.back();
  }

  Tensor pooled({n, static_cast<std::size_t>(arch_.head_in_features)});
  ops::global_avgpool_forward(*cur, pooled);

  Tensor logits({n, static_cast<std::size_t>(dom.head_spec.num_classes)});
  ops::linear_forward(pooled, dom.head.w, dom.head.b, logits);

  if (tape) {
    tape->pooled = pooled;
    tape->logits = logits;
  }
  return logits;
}

void MultiDomainModel::backward(const Tape& tape, const Tensor& dlogits) {
  DomainOverlay& dom = overlay(tape.domain_id);
  const std::size_t n = tape.input.dim(0);
  const std::size_t layers = arch_.layers.size();
  ops::Workspace ws;

  Tensor dpooled({n, static_cast<std::size_t>(arch_.head_in_features)});
  ops::linear_backward(tape.pooled, dom.head.w, dlogits, &dpooled, dom.head.gw,
                       dom.head.gb);

  // Per-block output gradients; residual consumers add into their source.
  std::vector<Tensor> dblock(layers);
  for (std::size_t i = 0; i < layers; ++i)
    dblock[i] = Tensor(tape.block_out[i].shape());

  ops::global_avgpool_backward(
      dpooled, static_cast<int>(tape.block_out.back().dim(2)),
      static_cast<int>(tape.block_out.back().dim(3)), dblock.back());

  for (int i = static_cast<int>(layers) - 1; i >= 0; --i) {
    const auto& l = arch_.layers[i];
    const ops::ConvGeom g = geom_for(i);

    Tensor d = std::move(dblock[i]);
    if (l.post_pool == "avg2") {
      Tensor up(tape.act_out[i].shape());
      ops::avgpool2_backward(d, up);
      d = std::move(up);
    }
    if (l.activation == "relu") {
      Tensor masked(d.shape());
      ops::relu_backward(tape.act_out[i], d, masked);
      d = std::move(masked);
    }
    if (l.residual_from) {
      kernels::add(d.data(), dblock[*l.residual_from].data(), d.numel());
    }
    if (const auto* site = arch_.bn_for_layer(i)) {
      BnStore& bn = dom.bn.at(site->layer_id);
      Tensor dconv(tape.conv_out[i].shape());
      ops::bn_backward(tape.conv_out[i], bn.gamma, tape.bn_mean.at(i),
                       tape.bn_invstd.at(i), d, dconv, bn.dgamma, bn.dbeta);
      d = std::move(dconv);
    }

    const Tensor& conv_in = i == 0 ? tape.input : tape.block_out[i - 1];
    Tensor d_eff_w(tape.eff_w[i].shape());
    Tensor d_eff_b;
    if (!tape.eff_b[i].empty()) d_eff_b = Tensor(tape.eff_b[i].shape());
    Tensor dx;
    Tensor* dx_ptr = nullptr;
    if (i > 0) {
      dx = Tensor(conv_in.shape());
      dx_ptr = &dx;
    }
    ops::conv2d_backward(conv_in, tape.eff_w[i], d, g, dx_ptr, &d_eff_w,
                         d_eff_b.empty() ? nullptr : &d_eff_b, ws);
    if (i > 0) kernels::add(dx.data(), dblock[i - 1].data(), dx.numel());

    // Route filter gradients: selected rows to the domain overlay, the rest
    // to the shared store. Dead shared copies receive nothing.
    const auto* sel = plan_.selected_in(i);
    const std::size_t row = filter_row_len(l);
    auto& shared_store = shared_[i];
    std::size_t pos = 0;
    for (int f = 0; f < l.out_channels; ++f) {
      const bool selected = sel && pos < sel->size() && (*sel)[pos] == f;
      if (selected) {
        auto& spec = dom.specific.at(i);
        kernels::add(d_eff_w.data() + static_cast<std::size_t>(f) * row,
                     spec.gw.data() + pos * row, row);
        if (!d_eff_b.empty()) spec.gb[pos] += d_eff_b[f];
        ++pos;
      } else {
        kernels::add(d_eff_w.data() + static_cast<std::size_t>(f) * row,
                     shared_store.gw.data() + static_cast<std::size_t>(f) * row,
                     row);
        if (!d_eff_b.empty()) shared_store.gb[f] += d_eff_b[f];
      }
    }
  }
}

void MultiDomainModel::zero_grads(const std::string& domain_id) {
  DomainOverlay& dom = overlay(domain_id);
  for (auto& store : shared_) {
    store.gw.zero();
    if (!store.gb.empty()) store.gb.zero();
  }
  for (auto& [layer_id, store] : dom.specific) {
    store.gw.zero();
    if (!store.gb.empty()) store.gb.zero();
  }
  for (auto& [layer_id, bn] : dom.bn) {
    bn.dgamma.zero();
    bn.dbeta.zero();
  }
  dom.head.gw.zero();
  dom.head.gb.zero();
}

namespace {

ParamRef make_ref(std::string name, Tensor& value, Tensor& grad,
                  Tensor& momentum, std::size_t offset, std::size_t len,
                  bool decay) {
  return ParamRef{std::move(name),
                  std::span<float>(value.data() + offset, len),
                  std::span<float>(grad.data() + offset, len),
                  std::span<float>(momentum.data() + offset, len), decay};
}

}  // namespace

std::vector<ParamRef> MultiDomainModel::trainable_params(
    const std::string& domain_id) {
  DomainOverlay& dom = overlay(domain_id);
  std::vector<ParamRef> refs;

  for (const auto& l : arch_.layers) {
    auto& store = shared_[l.layer_id];
    const auto* sel = plan_.selected_in(l.layer_id);
    const std::size_t row = filter_row_len(l);
    std::size_t pos = 0;
    for (int f = 0; f < l.out_channels; ++f) {
      if (sel && pos < sel->size() && (*sel)[pos] == f) {
        ++pos;  // shared copy of a replaced channel: dead, never trained
        continue;
      }
      refs.push_back(make_ref(layer_filter_name("shared", l.layer_id, f),
                              store.w, store.gw, store.mw,
                              static_cast<std::size_t>(f) * row, row, true));
      if (!store.b.empty()) {
        refs.push_back(make_ref(
            layer_filter_name("shared", l.layer_id, f) + "/bias", store.b,
            store.gb, store.mb, static_cast<std::size_t>(f), 1, false));
      }
    }
  }

  const std::string prefix = "domain/" + domain_id;
  for (auto& [layer_id, store] : dom.specific) {
    const auto& filters = *plan_.selected_in(layer_id);
    const std::size_t row = filter_row_len(arch_.layers[layer_id]);
    for (std::size_t pos = 0; pos < filters.size(); ++pos) {
      refs.push_back(make_ref(layer_filter_name(prefix, layer_id, filters[pos]),
                              store.w, store.gw, store.mw, pos * row, row,
                              true));
      if (!store.b.empty()) {
        refs.push_back(make_ref(
            layer_filter_name(prefix, layer_id, filters[pos]) + "/bias",
            store.b, store.gb, store.mb, pos, 1, false));
      }
    }
  }
  for (auto& [layer_id, bn] : dom.bn) {
    const std::string base = prefix + "/bn/L" + std::to_string(layer_id);
    refs.push_back(make_ref(base + "/gamma", bn.gamma, bn.dgamma, bn.mgamma, 0,
                            bn.gamma.numel(), false));
    refs.push_back(make_ref(base + "/beta", bn.beta, bn.dbeta, bn.mbeta, 0,
                            bn.beta.numel(), false));
  }
  refs.push_back(make_ref(prefix + "/head/weight", dom.head.w, dom.head.gw,
                          dom.head.mw, 0, dom.head.w.numel(), true));
  refs.push_back(make_ref(prefix + "/head/bias", dom.head.b, dom.head.gb,
                          dom.head.mb, 0, dom.head.b.numel(), false));
  return refs;
}

std::vector<ParamRef> MultiDomainModel::all_params() {
  std::vector<ParamRef> refs;
  for (const auto& l : arch_.layers) {
    auto& store = shared_[l.layer_id];
    const std::size_t row = filter_row_len(l);
    for (int f = 0; f < l.out_channels; ++f) {
      refs.push_back(make_ref(layer_filter_name("shared", l.layer_id, f),
                              store.w, store.gw, store.mw,
                              static_cast<std::size_t>(f) * row, row, true));
      if (!store.b.empty())
        refs.push_back(make_ref(
            layer_filter_name("shared", l.layer_id, f) + "/bias", store.b,
            store.gb, store.mb, static_cast<std::size_t>(f), 1, false));
    }
  }
  for (const std::string& domain_id : domain_ids_) {
    DomainOverlay& dom = overlays_.at(domain_id);
    const std::string prefix = "domain/" + domain_id;
    for (auto& [layer_id, store] : dom.specific) {
      const auto& filters = *plan_.selected_in(layer_id);
      const std::size_t row = filter_row_len(arch_.layers[layer_id]);
      for (std::size_t pos = 0; pos < filters.size(); ++pos) {
        refs.push_back(
            make_ref(layer_filter_name(prefix, layer_id, filters[pos]),
                     store.w, store.gw, store.mw, pos * row, row, true));
        if (!store.b.empty())
          refs.push_back(make_ref(
              layer_filter_name(prefix, layer_id, filters[pos]) + "/bias",
              store.b, store.gb, store.mb, pos, 1, false));
      }
    }
    for (auto& [layer_id, bn] : dom.bn) {
      const std::string base = prefix + "/bn/L" + std::to_string(layer_id);
      refs.push_back(make_ref(base + "/gamma", bn.gamma, bn.dgamma, bn.mgamma,
                              0, bn.gamma.numel(), false));
      refs.push_back(make_ref(base + "/beta", bn.beta, bn.dbeta, bn.mbeta, 0,
                              bn.beta.numel(), false));
    }
    refs.push_back(make_ref(prefix + "/head/weight", dom.head.w, dom.head.gw,
                            dom.head.mw, 0, dom.head.w.numel(), true));
    refs.push_back(make_ref(prefix + "/head/bias", dom.head.b, dom.head.gb,
                            dom.head.mb, 0, dom.head.b.numel(), false));
  }
  return refs;
}

std::string MultiDomainModel::params_digest() {
  std::uint64_t h = kFnvOffset;
  for (const ParamRef& ref : all_params()) {
    h = fnv1a64(ref.name, h);
    h = fnv1a64(
        std::string_view(reinterpret_cast<const char*>(ref.value.data()),
                         ref.value.size_bytes()),
        h);
  }
  // Running statistics are model state even though they are not learned
  // parameters; fold them in as well.
  for (const std::string& domain_id : domain_ids_) {
    for (const auto& [layer_id, bn] : overlays_.at(domain_id).bn) {
      for (const Tensor* t : {&bn.running_mean, &bn.running_var}) {
        h = fnv1a64(std::string_view(reinterpret_cast<const char*>(t->data()),
                                     t->numel() * sizeof(float)),
                    h);
      }
    }
  }
  return to_hex(h);
}

// --- container IO --------------------------------------------------------

namespace {

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in, const std::string& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError("truncated container file: " + path);
  return v;
}

}  // namespace

void write_container(const std::filesystem::path& path,
                     const TensorContainer& container) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write container file: " + path.string());
  out.write(kMagic, 4);
  write_pod(out, kContainerVersion);
  write_pod(out, static_cast<std::uint64_t>(container.manifest_json.size()));
  out.write(container.manifest_json.data(),
            static_cast<std::streamsize>(container.manifest_json.size()));
  write_pod(out, static_cast<std::uint32_t>(container.tensors.size()));
  for (const auto& [name, tensor] : container.tensors) {
    write_pod(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod(out, static_cast<std::uint32_t>(tensor.rank()));
    for (std::size_t d : tensor.shape())
      write_pod(out, static_cast<std::uint64_t>(d));
    out.write(reinterpret_cast<const char*>(tensor.data()),
              static_cast<std::streamsize>(tensor.numel() * sizeof(float)));
  }
  if (!out) throw IoError("failed while writing container: " + path.string());
}

TensorContainer read_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open container file: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw IoError("not a tensor container file: " + path.string());
  const auto version = read_pod<std::uint32_t>(in, path.string());
  if (version != kContainerVersion)
    throw IoError("unsupported container version " + std::to_string(version));
  const auto manifest_len = read_pod<std::uint64_t>(in, path.string());
  TensorContainer container;
  container.manifest_json.resize(manifest_len);
  in.read(container.manifest_json.data(),
          static_cast<std::streamsize>(manifest_len));
  const auto count = read_pod<std::uint32_t>(in, path.string());
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = read_pod<std::uint32_t>(in, path.string());
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto rank = read_pod<std::uint32_t>(in, path.string());
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape)
      d = static_cast<std::size_t>(read_pod<std::uint64_t>(in, path.string()));
    Tensor t(shape);
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(float)));
    if (!in) throw IoError("truncated container file: " + path.string());
    container.tensors.emplace_back(std::move(name), std::move(t));
  }
  return container;
}

// --- checkpointing -------------------------------------------------------

namespace {

// Filter f of a layer as a standalone [in/g, kh, kw] tensor.
Tensor slice_filter(const Tensor& w, const as::ConvLayerSpec& l,
                    std::size_t row_index) {
  const std::size_t row = filter_row_len(l);
  Tensor t({static_cast<std::size_t>(l.in_channels / l.groups),
            static_cast<std::size_t>(l.kernel_h),
            static_cast<std::size_t>(l.kernel_w)});
  std::memcpy(t.data(), w.data() + row_index * row, row * sizeof(float));
  return t;
}

Tensor scalar_tensor(float v) {
  Tensor t({1});
  t[0] = v;
  return t;
}

}  // namespace

void MultiDomainModel::save_checkpoint(const std::filesystem::path& path,
                                       bool omit_dead_channels) {
  json manifest;
  manifest["schema_version"] = 1;
  manifest["arch"] = json::parse(as::arch_to_json_text(arch_));
  manifest["plan"] = json::parse(planner::plan_to_json_text(plan_));
  manifest["plan_digest"] = plan_.digest();
  manifest["domain_ids"] = domain_ids_;
  json heads = json::array();
  for (const std::string& id : domain_ids_) {
    heads.push_back({{"domain_id", id},
                     {"num_classes", overlays_.at(id).head_spec.num_classes}});
  }
  manifest["heads"] = heads;
  manifest["omit_dead_channels"] = omit_dead_channels;

  TensorContainer container;
  container.manifest_json = manifest.dump();

  for (const auto& l : arch_.layers) {
    const auto& store = shared_[l.layer_id];
    for (int f = 0; f < l.out_channels; ++f) {
      if (omit_dead_channels && plan_.selects(l.layer_id, f)) continue;
      container.tensors.emplace_back(
          layer_filter_name("shared", l.layer_id, f),
          slice_filter(store.w, l, static_cast<std::size_t>(f)));
      if (!store.b.empty())
        container.tensors.emplace_back(
            layer_filter_name("shared", l.layer_id, f) + "/bias",
            scalar_tensor(store.b[f]));
    }
  }
  for (const std::string& domain_id : domain_ids_) {
    const DomainOverlay& dom = overlays_.at(domain_id);
    const std::string prefix = "domain/" + domain_id;
    for (const auto& [layer_id, store] : dom.specific) {
      const auto& l = arch_.layers[layer_id];
      const auto& filters = *plan_.selected_in(layer_id);
      for (std::size_t pos = 0; pos < filters.size(); ++pos) {
        container.tensors.emplace_back(
            layer_filter_name(prefix, layer_id, filters[pos]),
            slice_filter(store.w, l, pos));
        if (!store.b.empty())
          container.tensors.emplace_back(
              layer_filter_name(prefix, layer_id, filters[pos]) + "/bias",
              scalar_tensor(store.b[pos]));
      }
    }
    for (const auto& [layer_id, bn] : dom.bn) {
      const std::string base = prefix + "/bn/L" + std::to_string(layer_id);
      container.tensors.emplace_back(base + "/gamma", bn.gamma);
      container.tensors.emplace_back(base + "/beta", bn.beta);
      container.tensors.emplace_back(base + "/running_mean", bn.running_mean);
      container.tensors.emplace_back(base + "/running_var", bn.running_var);
    }
    container.tensors.emplace_back(prefix + "/head/weight", dom.head.w);
    container.tensors.emplace_back(prefix + "/head/bias", dom.head.b);
  }
  write_container(path, container);
}

MultiDomainModel MultiDomainModel::load_checkpoint(
    const std::filesystem::path& path) {
  const TensorContainer container = read_container(path);
  json manifest;
  try {
    manifest = json::parse(container.manifest_json);
  } catch (const json::exception& e) {
    throw IoError(std::string("bad checkpoint manifest: ") + e.what());
  }
  as::ArchitectureSpec arch =
      as::arch_from_json_text(manifest.at("arch").dump());
  planner::SharingPlan plan =
      planner::plan_from_json_text(manifest.at("plan").dump());
  std::vector<as::HeadSpec> heads;
  for (const auto& h : manifest.at("heads")) {
    heads.push_back({h.at("domain_id").get<std::string>(),
                     h.at("num_classes").get<int>()});
  }
  const bool omit_dead = manifest.value("omit_dead_channels", false);

  MultiDomainModel model =
      assemble(std::move(arch), std::move(plan), std::move(heads), 0);

  auto fetch = [&](const std::string& name, bool required) -> const Tensor* {
    const Tensor* t = container.find(name);
    if (!t && required)
      throw IoError("checkpoint is missing tensor '" + name + "'");
    return t;
  };

  for (const auto& l : model.arch_.layers) {
    auto& store = model.shared_[l.layer_id];
    const std::size_t row = filter_row_len(l);
    for (int f = 0; f < l.out_channels; ++f) {
      const bool dead = model.plan_.selects(l.layer_id, f);
      const std::string name = layer_filter_name("shared", l.layer_id, f);
      const Tensor* t = fetch(name, !(omit_dead && dead));
      if (t) {
        if (t->numel() != row)
          throw IoError("checkpoint tensor '" + name + "' has wrong size");
        std::memcpy(store.w.data() + static_cast<std::size_t>(f) * row,
                    t->data(), row * sizeof(float));
      } else {
        std::memset(store.w.data() + static_cast<std::size_t>(f) * row, 0,
                    row * sizeof(float));
      }
      if (!store.b.empty()) {
        const Tensor* bt = fetch(name + "/bias", !(omit_dead && dead));
        store.b[f] = bt ? (*bt)[0] : 0.0f;
      }
    }
  }
  for (const std::string& domain_id : model.domain_ids_) {
    DomainOverlay& dom = model.overlays_.at(domain_id);
    const std::string prefix = "domain/" + domain_id;
    for (auto& [layer_id, store] : dom.specific) {
      const auto& l = model.arch_.layers[layer_id];
      const auto& filters = *model.plan_.selected_in(layer_id);
      const std::size_t row = filter_row_len(l);
      for (std::size_t pos = 0; pos < filters.size(); ++pos) {
        const std::string name =
            layer_filter_name(prefix, layer_id, filters[pos]);
        const Tensor* t = fetch(name, true);
        if (t->numel() != row)
          throw IoError("checkpoint tensor '" + name + "' has wrong size");
        std::memcpy(store.w.data() + pos * row, t->data(), row * sizeof(float));
        if (!store.b.empty()) store.b[pos] = (*fetch(name + "/bias", true))[0];
      }
    }
    for (auto& [layer_id, bn] : dom.bn) {
      const std::string base = prefix + "/bn/L" + std::to_string(layer_id);
      const std::pair<const char*, Tensor*> parts[] = {
          {"/gamma", &bn.gamma},
          {"/beta", &bn.beta},
          {"/running_mean", &bn.running_mean},
          {"/running_var", &bn.running_var}};
      for (auto [suffix, dst] : parts) {
        const Tensor* t = fetch(base + suffix, true);
        if (t->numel() != dst->numel())
          throw IoError("checkpoint tensor '" + base + suffix +
                        "' has wrong size");
        std::memcpy(dst->data(), t->data(), t->numel() * sizeof(float));
      }
    }
    const std::pair<const char*, Tensor*> head_parts[] = {
        {"/head/weight", &dom.head.w}, {"/head/bias", &dom.head.b}};
    for (auto [suffix, dst] : head_parts) {
      const Tensor* t = fetch(prefix + suffix, true);
      if (t->numel() != dst->numel())
        throw IoError("checkpoint tensor '" + prefix + suffix +
                      "' has wrong size");
      std::memcpy(dst->data(), t->data(), t->numel() * sizeof(float));
    }
  }
  return model;
}

void MultiDomainModel::load_shared_weights(const std::filesystem::path& path) {
  const TensorContainer container = read_container(path);
  for (const auto& l : arch_.layers) {
    auto& store = shared_[l.layer_id];
    const std::size_t row = filter_row_len(l);
    for (int f = 0; f < l.out_channels; ++f) {
      const std::string name = layer_filter_name("shared", l.layer_id, f);
      const Tensor* t = container.find(name);
      if (!t)
        throw ShapeError("backbone weights: missing tensor '" + name + "'");
      if (t->numel() != row)
        throw ShapeError("backbone weights: tensor '" + name +
                         "' has wrong shape " + t->shape_str());
      std::memcpy(store.w.data() + static_cast<std::size_t>(f) * row, t->data(),
                  row * sizeof(float));
      if (!store.b.empty()) {
        const Tensor* bt = container.find(name + "/bias");
        if (!bt)
          throw ShapeError("backbone weights: missing tensor '" + name +
                           "/bias'");
        store.b[f] = (*bt)[0];
      }
    }
  }
}

void MultiDomainModel::load_head_weights(const std::string& domain_id,
                                         const std::filesystem::path& path) {
  DomainOverlay& dom = overlay(domain_id);
  const TensorContainer container = read_container(path);
  const std::pair<const char*, Tensor*> parts[] = {
      {"head/weight", &dom.head.w}, {"head/bias", &dom.head.b}};
  for (auto [name, dst] : parts) {
    const Tensor* t = container.find(name);
    if (!t)
      throw ShapeError("head weights for '" + domain_id +
                       "': missing tensor '" + std::string(name) + "'");
    if (t->shape() != dst->shape())
      throw ShapeError("head weights for '" + domain_id + "': tensor '" +
                       std::string(name) + "' has shape " + t->shape_str() +
                       ", expected " + dst->shape_str());
    std::memcpy(dst->data(), t->data(), t->numel() * sizeof(float));
  }
}

}  // namespace mdl::mdnet
