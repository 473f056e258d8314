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
#include <string>
#include <vector>

#include "mdl/tensor.hpp"

namespace mdl::bench {

// Seeded generator spec for a synthetic image-classification domain: one
// random prototype image per class plus Gaussian noise, with a per-domain
// channel shift/scale so different domains have genuinely different input
// statistics.
struct SyntheticSpec {
  int num_classes = 4;
  int channels = 3;
  int height = 16;
  int width = 16;
  int train_count = 256;
  int val_count = 96;
  float noise = 0.3f;
  std::uint64_t seed = 0;
};

// One domain's labeled train/validation data, fully materialized, with
// deterministic iteration order under a fixed seed.
class DomainDataset {
 public:
  static DomainDataset synthetic(const std::string& domain_id,
                                 const SyntheticSpec& spec);
  static DomainDataset from_file(const std::string& domain_id,
                                 const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  const std::string& domain_id() const { return domain_id_; }
  int num_classes() const { return num_classes_; }
  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t train_count() const { return train_labels_.size(); }
  std::size_t val_count() const { return val_labels_.size(); }

  // Copies val rows [start, start+count) into x/labels.
  void fill_val_batch(std::size_t start, std::size_t count, Tensor& x,
                      std::vector<int>& labels) const;
  void fill_train_batch(const std::vector<int>& indices, Tensor& x,
                        std::vector<int>& labels) const;

  // Deterministic epoch-shuffled batch stream. The order depends only on
  // (seed, domain_id, epoch), so a domain's sequence is identical whether it
  // is trained jointly or alone.
  class BatchStream {
   public:
    BatchStream(const DomainDataset& dataset, std::uint64_t seed,
                int batch_size);
    void next(Tensor& x, std::vector<int>& labels);

   private:
    void reshuffle();

    const DomainDataset* dataset_;
    std::uint64_t seed_;
    int batch_size_;
    int epoch_ = 0;
    std::size_t cursor_ = 0;
    std::vector<int> order_;
  };

  BatchStream train_stream(std::uint64_t seed, int batch_size) const {
    return BatchStream(*this, seed, batch_size);
  }

 private:
  std::string domain_id_;
  int num_classes_ = 0;
  int channels_ = 0, height_ = 0, width_ = 0;
  Tensor train_x_;  // [train_count, C, H, W]
  std::vector<int> train_labels_;
  Tensor val_x_;
  std::vector<int> val_labels_;

  void validate() const;
};

}  // namespace mdl::bench
