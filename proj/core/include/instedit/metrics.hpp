// Copyright (C) 2026 The instedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "instedit/image.hpp"

namespace instedit {

using Embedding = std::vector<double>;

/// An image handed to a provider. `key` identifies it for file-backed lookup:
/// "crop/<instance>/<frame>" or "frame/<k>".
struct ImageRef {
    const Image* pixels = nullptr;
    std::string key;
};

/// Maps images and captions to unit-norm vectors of a fixed dimension.
class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual std::size_t dimension() const = 0;
    virtual Embedding embed_image(const ImageRef& image) const = 0;
    virtual Embedding embed_text(std::string_view text) const = 0;
};

/// Hashed bag of words for text; per-channel 16-bin histograms for images.
class ToyEmbeddingProvider final : public EmbeddingProvider {
public:
    static constexpr std::size_t kDimension = 64;

    std::size_t dimension() const override { return kDimension; }
    Embedding embed_image(const ImageRef& image) const override;
    Embedding embed_text(std::string_view text) const override;
};

/// Precomputed vectors. Text is looked up as "text/<normalized caption>",
/// images by their ImageRef key. Missing ids throw DataError.
class FileEmbeddingProvider final : public EmbeddingProvider {
public:
    FileEmbeddingProvider(std::size_t dim, std::map<std::string, Embedding> vectors);

    /// Reads float32 little-endian data at `path` plus the `path`.json sidecar
    /// {"dim": d, "count": n, "ids": [...]}. Vectors are normalized on load.
    static FileEmbeddingProvider load(const std::filesystem::path& path);

    std::size_t dimension() const override { return dim_; }
    Embedding embed_image(const ImageRef& image) const override;
    Embedding embed_text(std::string_view text) const override;

    static std::string text_key(std::string_view caption);

private:
    const Embedding& lookup(const std::string& id) const;

    std::size_t dim_;
    std::map<std::string, Embedding> vectors_;
};

void save_embeddings(const std::filesystem::path& path, std::span<const std::string> ids,
                     std::span<const Embedding> vectors);

/// L2 normalization; the zero vector maps to the uniform unit vector.
Embedding normalize(Embedding v);
double cosine(std::span<const double> a, std::span<const double> b);

/// Tight bounding box of `mask`, zero-padded symmetrically to a square
/// (odd remainders go to the bottom or right). nullopt when the mask is empty.
std::optional<Image> crop_instance(const Image& frame, const BinaryMask& mask);

struct InstanceCrops {
    std::string instance_id;
    std::vector<Image> crops;
    std::vector<std::size_t> frames;          // source frame of each crop
    std::vector<std::size_t> skipped_frames;  // frames where the mask was empty
};

InstanceCrops crop_sequence(std::string instance_id, std::span<const Image> frames, std::span<const BinaryMask> masks);

/// Per-crop embeddings in frame order.
std::vector<Embedding> crop_embeddings(const InstanceCrops& crops, const EmbeddingProvider& provider);

/// Mean of per-frame crop embeddings, renormalized.
Embedding instance_embedding(const InstanceCrops& crops, const EmbeddingProvider& provider);

class SimilarityMatrix {
public:
    explicit SimilarityMatrix(std::size_t n, std::vector<double> values = {});

    std::size_t size() const { return n_; }
    double& at(std::size_t i, std::size_t j) { return values_[i * n_ + j]; }
    double at(std::size_t i, std::size_t j) const { return values_[i * n_ + j]; }
    std::span<const double> values() const { return values_; }

private:
    std::size_t n_;
    std::vector<double> values_;
};

/// S[i][j] = cos(instance i image embedding, caption j text embedding).
SimilarityMatrix similarity_matrix(std::span<const InstanceCrops> crops, std::span<const std::string> captions,
                                   const EmbeddingProvider& provider);

/// Row-wise leftmost argmax set to 1, everything else 0; mean of the diagonal.
double cia_score(const SimilarityMatrix& s);

/// Mean over frames of cos(crop, caption).
double local_textual_faithfulness(const InstanceCrops& crops, std::string_view caption,
                                  const EmbeddingProvider& provider);

/// Mean cosine between consecutive crops; nullopt with fewer than two crops.
std::optional<double> local_temporal_consistency(const InstanceCrops& crops, const EmbeddingProvider& provider);

/// Fraction of instances closer to their target caption than to their source caption.
double instance_accuracy(std::span<const InstanceCrops> crops, std::span<const std::string> source_captions,
                         std::span<const std::string> target_captions, const EmbeddingProvider& provider);

struct GlobalScores {
    std::optional<double> gtc;  // absent for single-frame videos
    double gtf = 0.0;
    double fa = 0.0;
};

GlobalScores global_scores(std::span<const Image> frames, std::string_view source_caption,
                           std::string_view target_caption, const EmbeddingProvider& provider);

/// Single-scale SSIM over valid windows: Gaussian window 11x11, sigma 1.5
/// (shrunk to the largest odd size fitting smaller frames), K1 0.01, K2 0.03,
/// L 255, averaged over channels.
double ssim(const Image& a, const Image& b);

/// SSIM after zeroing every pixel covered by `instances` in both frames.
double background_ssim(const Image& a, const Image& b, const BinaryMask& instances);

/// Perceptual distance slot. No implementation ships; reports leave it null.
class PerceptualDistance {
public:
    virtual ~PerceptualDistance() = default;
    virtual double distance(const Image& a, const Image& b) const = 0;
};

struct InstanceMetrics {
    std::string instance_id;
    std::optional<double> ltf;
    std::optional<double> ltc;
    std::optional<bool> accurate;
    std::vector<std::size_t> skipped_frames;
};

struct MetricsReport {
    std::optional<double> cia;
    std::optional<double> ltf;
    std::optional<double> ltc;
    std::optional<double> ia;
    std::optional<double> gtc;
    std::optional<double> gtf;
    std::optional<double> fa;
    std::optional<double> ssim;
    std::optional<double> lpips;
    std::vector<std::string> instance_order;
    std::vector<double> similarity;  // row-major n x n
    std::vector<InstanceMetrics> instances;

    std::string to_json() const;
};

struct InstanceEvaluation {
    std::string instance_id;
    std::string target_caption;
    std::string source_caption;  // empty when unknown
    MaskSequence masks;
};

struct EvaluationInput {
    std::span<const Image> edited;
    std::span<const Image> source;  // optional; enables background SSIM
    std::span<const InstanceEvaluation> instances;
    std::string global_source_caption;
    std::string global_target_caption;
};

MetricsReport evaluate(const EvaluationInput& input, const EmbeddingProvider& provider,
                       const PerceptualDistance* perceptual = nullptr);

}  // namespace instedit
