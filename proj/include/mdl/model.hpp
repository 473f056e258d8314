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

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mdl/archspec.hpp"
#include "mdl/ops.hpp"
#include "mdl/planner.hpp"
#include "mdl/tensor.hpp"

namespace mdl::mdnet {

// One conv layer's parameters: weight [out, in/g, kh, kw], bias [out] or
// empty, with matching gradient and momentum buffers.
struct LayerStore {
  Tensor w, b;
  Tensor gw, gb;
  Tensor mw, mb;
};

struct BnStore {
  Tensor gamma, beta;
  Tensor running_mean, running_var;
  Tensor dgamma, dbeta;
  Tensor mgamma, mbeta;
};

struct HeadStore {
  Tensor w, b;
  Tensor gw, gb;
  Tensor mw, mb;
};

// Everything one domain owns: its copies of the plan's selected filters
// (rows aligned with the sorted selection), its BN sets, and its classifier.
struct DomainOverlay {
  archspec::HeadSpec head_spec;
  std::map<int, LayerStore> specific;  // layer_id -> selected-filter rows
  std::map<int, BnStore> bn;           // keyed by bn site layer_id
  HeadStore head;
};

// A slice of parameters the optimizer may update, with its gradient and
// momentum slices. `decay` marks weights subject to weight decay.
struct ParamRef {
  std::string name;
  std::span<float> value;
  std::span<float> grad;
  std::span<float> momentum;
  bool decay = false;
};

// Per-step activation record for one domain's forward pass.
struct Tape {
  std::string domain_id;
  Tensor input;
  std::vector<Tensor> eff_w, eff_b;          // spliced weights per layer
  std::vector<Tensor> conv_out;              // pre-BN
  std::vector<Tensor> act_out;               // post-activation (pre-pool)
  std::vector<Tensor> block_out;             // layer block output
  std::map<int, Tensor> bn_mean, bn_invstd;  // saved batch stats
  Tensor pooled;
  Tensor logits;
};

// Shared backbone filters plus one overlay per domain, with the replacement
// forward: selected output channels are computed by the domain's own filters
// applied to the same layer input, then overwrite the backbone channels
// before the next layer. Shared copies of replaced channels stay allocated
// but receive no gradient from any domain.
class MultiDomainModel {
 public:
  static MultiDomainModel assemble(archspec::ArchitectureSpec arch,
                                   planner::SharingPlan plan,
                                   std::vector<archspec::HeadSpec> heads,
                                   std::uint64_t init_seed);

  const archspec::ArchitectureSpec& arch() const { return arch_; }
  const planner::SharingPlan& plan() const { return plan_; }
  const std::vector<std::string>& domain_ids() const { return domain_ids_; }
  const DomainOverlay& overlay(const std::string& domain_id) const;
  DomainOverlay& overlay(const std::string& domain_id);
  const std::vector<LayerStore>& shared() const { return shared_; }
  std::vector<LayerStore>& shared() { return shared_; }

  // Default deterministic initialization: shared filters He-normal from
  // (seed, layer) streams, heads from (seed, domain) streams, BN identity,
  // and every domain's specific filters copied from the shared values so
  // replacement starts as an identity.
  void default_init(std::uint64_t seed);
  void copy_shared_to_specific();
  void reset_bn();
  void zero_momentum();

  // Training-mode forward: records activations and updates the domain's BN
  // running statistics.
  Tensor forward_train(const std::string& domain_id, const Tensor& x,
                       Tape& tape);
  // Evaluation-mode forward: BN uses frozen running statistics; const and
  // safe to call concurrently for different domains.
  Tensor forward_eval(const std::string& domain_id, const Tensor& x) const;

  // Accumulates gradients for the tape's domain. Touches only buffers in
  // trainable_params(domain): other overlays and the shared copies of
  // replaced channels are never written.
  void backward(const Tape& tape, const Tensor& dlogits);
  void zero_grads(const std::string& domain_id);

  // Shared filters not selected by the plan, plus the domain's specific
  // filters, BN parameters, and head.
  std::vector<ParamRef> trainable_params(const std::string& domain_id);

  // Every learned parameter (including dead shared copies), fixed order.
  std::vector<ParamRef> all_params();

  // Digest over all parameter bytes in all_params() order.
  std::string params_digest();

  // Checkpoint: named-tensor container + manifest (arch, plan, plan digest,
  // domain ids, schema version). `omit_dead_channels` drops shared copies of
  // replaced filters; they reload as zeros.
  void save_checkpoint(const std::filesystem::path& path,
                       bool omit_dead_channels = false);
  static MultiDomainModel load_checkpoint(const std::filesystem::path& path);

  // External weight ingestion; shape mismatches name the offending tensor.
  void load_shared_weights(const std::filesystem::path& path);
  void load_head_weights(const std::string& domain_id,
                         const std::filesystem::path& path);

  static constexpr float kBnEps = 1e-5f;
  static constexpr float kBnMomentum = 0.1f;

 private:
  MultiDomainModel() = default;

  ops::ConvGeom geom_for(int layer_id) const;
  Tensor forward_impl(const std::string& domain_id, const Tensor& x,
                      bool train, Tape* tape) const;

  archspec::ArchitectureSpec arch_;
  planner::SharingPlan plan_;
  std::vector<std::string> domain_ids_;
  std::vector<LayerStore> shared_;
  std::map<std::string, DomainOverlay> overlays_;
};

// Named-tensor container IO, shared by checkpoints and weight files.
struct TensorContainer {
  std::string manifest_json;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const;
};
void write_container(const std::filesystem::path& path,
                     const TensorContainer& container);
TensorContainer read_container(const std::filesystem::path& path);

}  // namespace mdl::mdnet
