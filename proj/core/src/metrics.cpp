// Copyright (C) 2026 The instedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "instedit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "instedit/caption.hpp"
#include "instedit/errors.hpp"
#include "instedit/io.hpp"
#include "json.hpp"

namespace instedit {

using nlohmann::json;

namespace {

constexpr std::size_t kHistogramBins = 16;
constexpr std::size_t kMaxHistogramChannels = 4;

std::string normalized_text(std::string_view text) {
    std::string out;
    for (const auto& w : tokenize(text)) {
        if (!out.empty()) {
            out += ' ';
        }
        out += w;
    }
    return out;
}

void require_unit_dim(const Embedding& v, std::size_t dim, const std::string& what) {
    INSTEDIT_CHECK(v.size() == dim, DataError,
                   what + " embedding has dimension " + std::to_string(v.size()) + ", expected " + std::to_string(dim));
}

double mean_of(std::span<const double> xs) {
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

}  // namespace

Embedding normalize(Embedding v) {
    double sq = 0.0;
    for (double x : v) {
        sq += x * x;
    }
    if (!(sq > 0.0)) {
        const double u = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(v.size(), 1)));
        std::fill(v.begin(), v.end(), u);
        return v;
    }
    const double inv = 1.0 / std::sqrt(sq);
    for (double& x : v) {
        x *= inv;
    }
    return v;
}

double cosine(std::span<const double> a, std::span<const double> b) {
    INSTEDIT_CHECK(a.size() == b.size(), DataError, "cosine of vectors with different dimensions");
    double ab = 0.0;
    double aa = 0.0;
    double bb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    INSTEDIT_CHECK(aa > 0.0 && bb > 0.0, NumericalError, "cosine of a zero vector");
    return std::clamp(ab / std::sqrt(aa * bb), -1.0, 1.0);
}

Embedding ToyEmbeddingProvider::embed_image(const ImageRef& image) const {
    INSTEDIT_CHECK(image.pixels != nullptr, DataError, "image reference without pixels: " + image.key);
    const Image& img = *image.pixels;
    Embedding v(kDimension, 0.0);
    const std::size_t used = std::min(img.channels, kMaxHistogramChannels);
    for (std::size_t p = 0; p < img.height * img.width; ++p) {
        for (std::size_t c = 0; c < used; ++c) {
            const std::size_t bin = img.data[p * img.channels + c] * kHistogramBins / 256;
            v[c * kHistogramBins + bin] += 1.0;
        }
    }
    return normalize(std::move(v));
}

Embedding ToyEmbeddingProvider::embed_text(std::string_view text) const {
    Embedding v(kDimension, 0.0);
    for (const auto& w : tokenize(text)) {
        v[token_id(w) % kDimension] += 1.0;
    }
    return normalize(std::move(v));
}

FileEmbeddingProvider::FileEmbeddingProvider(std::size_t dim, std::map<std::string, Embedding> vectors)
    : dim_(dim), vectors_(std::move(vectors)) {
    INSTEDIT_CHECK(dim_ >= 1, DataError, "embedding dimension must be >= 1");
    for (auto& [id, v] : vectors_) {
        require_unit_dim(v, dim_, id);
        v = normalize(std::move(v));
    }
}

FileEmbeddingProvider FileEmbeddingProvider::load(const std::filesystem::path& path) {
    std::ifstream meta_in(sidecar_path(path));
    INSTEDIT_CHECK(meta_in.good(), DataError, "missing embedding sidecar " + sidecar_path(path).string());
    std::size_t dim = 0;
    std::size_t count = 0;
    std::vector<std::string> ids;
    try {
        const json meta = json::parse(meta_in);
        dim = meta.at("dim").get<std::size_t>();
        count = meta.at("count").get<std::size_t>();
        ids = meta.at("ids").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw DataError("bad embedding sidecar " + sidecar_path(path).string() + ": " + e.what());
    }
    INSTEDIT_CHECK(ids.size() == count, DataError, "embedding sidecar lists " + std::to_string(ids.size()) +
                                                       " ids but count is " + std::to_string(count));
    const std::vector<float> raw = read_f32le(path);
    INSTEDIT_CHECK(raw.size() == dim * count, DataError,
                   "embedding file holds " + std::to_string(raw.size()) + " floats, expected " +
                       std::to_string(dim * count));
    std::map<std::string, Embedding> vectors;
    for (std::size_t i = 0; i < count; ++i) {
        Embedding v(raw.begin() + static_cast<std::ptrdiff_t>(i * dim),
                    raw.begin() + static_cast<std::ptrdiff_t>((i + 1) * dim));
        INSTEDIT_CHECK(vectors.emplace(ids[i], std::move(v)).second, DataError, "duplicate embedding id " + ids[i]);
    }
    return FileEmbeddingProvider(dim, std::move(vectors));
}

std::string FileEmbeddingProvider::text_key(std::string_view caption) { return "text/" + normalized_text(caption); }

const Embedding& FileEmbeddingProvider::lookup(const std::string& id) const {
    const auto it = vectors_.find(id);
    INSTEDIT_CHECK(it != vectors_.end(), DataError, "no precomputed embedding for " + id);
    return it->second;
}

Embedding FileEmbeddingProvider::embed_image(const ImageRef& image) const { return lookup(image.key); }

Embedding FileEmbeddingProvider::embed_text(std::string_view text) const { return lookup(text_key(text)); }

void save_embeddings(const std::filesystem::path& path, std::span<const std::string> ids,
                     std::span<const Embedding> vectors) {
    INSTEDIT_CHECK(ids.size() == vectors.size(), DataError, "embedding ids and vectors differ in count");
    INSTEDIT_CHECK(!vectors.empty(), DataError, "no embeddings to save");
    const std::size_t dim = vectors.front().size();
    std::vector<float> raw;
    raw.reserve(dim * vectors.size());
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        require_unit_dim(vectors[i], dim, ids[i]);
        for (double x : vectors[i]) {
            raw.push_back(static_cast<float>(x));
        }
    }
    write_f32le(path, raw);
    const json meta = {{"dim", dim}, {"count", ids.size()}, {"ids", std::vector<std::string>(ids.begin(), ids.end())}};
    std::ofstream out(sidecar_path(path));
    INSTEDIT_CHECK(out.good(), DataError, "cannot write " + sidecar_path(path).string());
    out << meta.dump(2) << '\n';
}

std::optional<Image> crop_instance(const Image& frame, const BinaryMask& mask) {
    INSTEDIT_CHECK(mask.height == frame.height && mask.width == frame.width, DataError,
                   "mask is " + std::to_string(mask.height) + "x" + std::to_string(mask.width) + ", frame is " +
                       std::to_string(frame.height) + "x" + std::to_string(frame.width));
    std::size_t y0 = mask.height, y1 = 0, x0 = mask.width, x1 = 0;
    for (std::size_t y = 0; y < mask.height; ++y) {
        for (std::size_t x = 0; x < mask.width; ++x) {
            if (mask.at(y, x)) {
                y0 = std::min(y0, y);
                y1 = std::max(y1, y + 1);
                x0 = std::min(x0, x);
                x1 = std::max(x1, x + 1);
            }
        }
    }
    if (y0 >= y1) {
        return std::nullopt;
    }
    const std::size_t h = y1 - y0;
    const std::size_t w = x1 - x0;
    const std::size_t side = std::max(h, w);
    const std::size_t top = (side - h) / 2;
    const std::size_t left = (side - w) / 2;
    Image out(side, side, frame.channels, 0);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            for (std::size_t c = 0; c < frame.channels; ++c) {
                out.at(top + y, left + x, c) = frame.at(y0 + y, x0 + x, c);
            }
        }
    }
    return out;
}

InstanceCrops crop_sequence(std::string instance_id, std::span<const Image> frames,
                            std::span<const BinaryMask> masks) {
    INSTEDIT_CHECK(frames.size() == masks.size(), DataError,
                   "instance " + instance_id + " has " + std::to_string(masks.size()) + " masks for " +
                       std::to_string(frames.size()) + " frames");
    InstanceCrops out;
    out.instance_id = std::move(instance_id);
    for (std::size_t f = 0; f < frames.size(); ++f) {
        if (auto crop = crop_instance(frames[f], masks[f])) {
            out.crops.push_back(std::move(*crop));
            out.frames.push_back(f);
        } else {
            out.skipped_frames.push_back(f);
        }
    }
    return out;
}

std::vector<Embedding> crop_embeddings(const InstanceCrops& crops, const EmbeddingProvider& provider) {
    std::vector<Embedding> out;
    out.reserve(crops.crops.size());
    for (std::size_t k = 0; k < crops.crops.size(); ++k) {
        out.push_back(provider.embed_image(
            {&crops.crops[k], "crop/" + crops.instance_id + "/" + std::to_string(crops.frames[k])}));
        require_unit_dim(out.back(), provider.dimension(), "image");
    }
    return out;
}

Embedding instance_embedding(const InstanceCrops& crops, const EmbeddingProvider& provider) {
    INSTEDIT_CHECK(!crops.crops.empty(), DataError, "instance " + crops.instance_id + " is empty in every frame");
    Embedding sum(provider.dimension(), 0.0);
    for (const auto& e : crop_embeddings(crops, provider)) {
        for (std::size_t i = 0; i < sum.size(); ++i) {
            sum[i] += e[i];
        }
    }
    return normalize(std::move(sum));
}

SimilarityMatrix::SimilarityMatrix(std::size_t n, std::vector<double> values) : n_(n), values_(std::move(values)) {
    if (values_.empty()) {
        values_.assign(n_ * n_, 0.0);
    }
    INSTEDIT_CHECK(values_.size() == n_ * n_, DataError,
                   "similarity matrix needs " + std::to_string(n_ * n_) + " entries, got " +
                       std::to_string(values_.size()));
}

SimilarityMatrix similarity_matrix(std::span<const InstanceCrops> crops, std::span<const std::string> captions,
                                   const EmbeddingProvider& provider) {
    INSTEDIT_CHECK(!crops.empty(), DataError, "similarity matrix needs at least one instance");
    INSTEDIT_CHECK(crops.size() == captions.size(), DataError, "one caption per instance required");
    const std::size_t n = crops.size();
    std::vector<Embedding> text;
    for (const auto& c : captions) {
        text.push_back(provider.embed_text(c));
        require_unit_dim(text.back(), provider.dimension(), "text");
    }
    SimilarityMatrix s(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Embedding img = instance_embedding(crops[i], provider);
        for (std::size_t j = 0; j < n; ++j) {
            s.at(i, j) = cosine(img, text[j]);
        }
    }
    return s;
}

double cia_score(const SimilarityMatrix& s) {
    const std::size_t n = s.size();
    INSTEDIT_CHECK(n >= 1, DataError, "CIA of an empty similarity matrix");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < n; ++j) {
            if (s.at(i, j) > s.at(i, best)) {
                best = j;
            }
        }
        hits += best == i ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(n);
}

double local_textual_faithfulness(const InstanceCrops& crops, std::string_view caption,
                                  const EmbeddingProvider& provider) {
    INSTEDIT_CHECK(!crops.crops.empty(), DataError, "instance " + crops.instance_id + " is empty in every frame");
    const Embedding text = provider.embed_text(caption);
    std::vector<double> cos;
    for (const auto& e : crop_embeddings(crops, provider)) {
        cos.push_back(cosine(e, text));
    }
    return mean_of(cos);
}

std::optional<double> local_temporal_consistency(const InstanceCrops& crops, const EmbeddingProvider& provider) {
    if (crops.crops.size() < 2) {
        return std::nullopt;
    }
    const auto emb = crop_embeddings(crops, provider);
    std::vector<double> cos;
    for (std::size_t k = 0; k + 1 < emb.size(); ++k) {
        cos.push_back(cosine(emb[k], emb[k + 1]));
    }
    return mean_of(cos);
}

double instance_accuracy(std::span<const InstanceCrops> crops, std::span<const std::string> source_captions,
                         std::span<const std::string> target_captions, const EmbeddingProvider& provider) {
    INSTEDIT_CHECK(!crops.empty(), DataError, "instance accuracy needs at least one instance");
    INSTEDIT_CHECK(crops.size() == source_captions.size() && crops.size() == target_captions.size(), DataError,
                   "instance accuracy needs a source and target caption per instance");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < crops.size(); ++i) {
        const Embedding img = instance_embedding(crops[i], provider);
        const double to_target = cosine(img, provider.embed_text(target_captions[i]));
        const double to_source = cosine(img, provider.embed_text(source_captions[i]));
        hits += to_target > to_source ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(crops.size());
}

GlobalScores global_scores(std::span<const Image> frames, std::string_view source_caption,
                           std::string_view target_caption, const EmbeddingProvider& provider) {
    INSTEDIT_CHECK(!frames.empty(), DataError, "global scores need at least one frame");
    std::vector<Embedding> emb;
    for (std::size_t k = 0; k < frames.size(); ++k) {
        emb.push_back(provider.embed_image({&frames[k], "frame/" + std::to_string(k)}));
        require_unit_dim(emb.back(), provider.dimension(), "image");
    }
    const Embedding src = provider.embed_text(source_caption);
    const Embedding tgt = provider.embed_text(target_caption);
    GlobalScores out;
    if (frames.size() >= 2) {
        std::vector<double> cos;
        for (std::size_t k = 0; k + 1 < emb.size(); ++k) {
            cos.push_back(cosine(emb[k], emb[k + 1]));
        }
        out.gtc = mean_of(cos);
    }
    std::vector<double> faithful;
    std::size_t hits = 0;
    for (const auto& e : emb) {
        const double t = cosine(e, tgt);
        faithful.push_back(t);
        hits += t > cosine(e, src) ? 1 : 0;
    }
    out.gtf = mean_of(faithful);
    out.fa = static_cast<double>(hits) / static_cast<double>(frames.size());
    return out;
}

namespace {

std::vector<double> gaussian_kernel(std::size_t size, double sigma) {
    std::vector<double> g(size);
    const double r = static_cast<double>(size / 2);
    for (std::size_t i = 0; i < size; ++i) {
        const double d = static_cast<double>(i) - r;
        g[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    }
    const double sum = std::accumulate(g.begin(), g.end(), 0.0);
    for (double& v : g) {
        v /= sum;
    }
    return g;
}

// Valid separable filtering of an h x w plane.
std::vector<double> filter_valid(const std::vector<double>& src, std::size_t h, std::size_t w,
                                 const std::vector<double>& g) {
    const std::size_t k = g.size();
    const std::size_t oh = h - k + 1;
    const std::size_t ow = w - k + 1;
    std::vector<double> rows(h * ow, 0.0);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (std::size_t i = 0; i < k; ++i) {
                acc += g[i] * src[y * w + x + i];
            }
            rows[y * ow + x] = acc;
        }
    }
    std::vector<double> out(oh * ow, 0.0);
    for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (std::size_t i = 0; i < k; ++i) {
                acc += g[i] * rows[(y + i) * ow + x];
            }
            out[y * ow + x] = acc;
        }
    }
    return out;
}

}  // namespace

double ssim(const Image& a, const Image& b) {
    INSTEDIT_CHECK(a.height == b.height && a.width == b.width && a.channels == b.channels, DataError,
                   "ssim of frames with different shapes");
    INSTEDIT_CHECK(a.height >= 1 && a.width >= 1 && a.channels >= 1, DataError, "ssim of an empty frame");
    constexpr double kRange = 255.0;
    constexpr double c1 = (0.01 * kRange) * (0.01 * kRange);
    constexpr double c2 = (0.03 * kRange) * (0.03 * kRange);
    std::size_t size = std::min<std::size_t>({11, a.height, a.width});
    if (size % 2 == 0) {
        --size;
    }
    const auto g = gaussian_kernel(size, 1.5);
    const std::size_t h = a.height;
    const std::size_t w = a.width;
    const std::size_t n = h * w;

    double total = 0.0;
    for (std::size_t c = 0; c < a.channels; ++c) {
        std::vector<double> pa(n), pb(n), aa(n), bb(n), ab(n);
        for (std::size_t p = 0; p < n; ++p) {
            pa[p] = a.data[p * a.channels + c];
            pb[p] = b.data[p * b.channels + c];
            aa[p] = pa[p] * pa[p];
            bb[p] = pb[p] * pb[p];
            ab[p] = pa[p] * pb[p];
        }
        const auto ma = filter_valid(pa, h, w, g);
        const auto mb = filter_valid(pb, h, w, g);
        const auto ea = filter_valid(aa, h, w, g);
        const auto eb = filter_valid(bb, h, w, g);
        const auto eab = filter_valid(ab, h, w, g);
        double sum = 0.0;
        for (std::size_t i = 0; i < ma.size(); ++i) {
            const double va = ea[i] - ma[i] * ma[i];
            const double vb = eb[i] - mb[i] * mb[i];
            const double cov = eab[i] - ma[i] * mb[i];
            sum += ((2.0 * ma[i] * mb[i] + c1) * (2.0 * cov + c2)) /
                   ((ma[i] * ma[i] + mb[i] * mb[i] + c1) * (va + vb + c2));
        }
        total += sum / static_cast<double>(ma.size());
    }
    return total / static_cast<double>(a.channels);
}

double background_ssim(const Image& a, const Image& b, const BinaryMask& instances) {
    INSTEDIT_CHECK(instances.height == a.height && instances.width == a.width, DataError,
                   "background mask does not match the frame size");
    Image za = a;
    Image zb = b;
    for (std::size_t y = 0; y < a.height; ++y) {
        for (std::size_t x = 0; x < a.width; ++x) {
            if (instances.at(y, x)) {
                for (std::size_t c = 0; c < a.channels; ++c) {
                    za.at(y, x, c) = 0;
                    zb.at(y, x, c) = 0;
                }
            }
        }
    }
    return ssim(za, zb);
}

MetricsReport evaluate(const EvaluationInput& input, const EmbeddingProvider& provider,
                       const PerceptualDistance* perceptual) {
    INSTEDIT_CHECK(!input.edited.empty(), DataError, "no edited frames to evaluate");
    MetricsReport report;
    const std::size_t frames = input.edited.size();

    std::vector<InstanceCrops> crops;
    std::vector<std::string> targets;
    for (const auto& inst : input.instances) {
        crops.push_back(crop_sequence(inst.instance_id, input.edited, inst.masks));
        targets.push_back(inst.target_caption);
    }

    std::vector<double> ltf_values;
    std::vector<double> ltc_values;
    std::size_t ia_hits = 0;
    std::size_t ia_count = 0;
    std::vector<std::size_t> present;
    for (std::size_t i = 0; i < crops.size(); ++i) {
        InstanceMetrics m;
        m.instance_id = crops[i].instance_id;
        m.skipped_frames = crops[i].skipped_frames;
        if (!crops[i].crops.empty()) {
            present.push_back(i);
            m.ltf = local_textual_faithfulness(crops[i], targets[i], provider);
            ltf_values.push_back(*m.ltf);
            m.ltc = local_temporal_consistency(crops[i], provider);
            if (m.ltc) {
                ltc_values.push_back(*m.ltc);
            }
            const auto& src = input.instances[i].source_caption;
            if (!src.empty()) {
                const Embedding img = instance_embedding(crops[i], provider);
                m.accurate = cosine(img, provider.embed_text(targets[i])) > cosine(img, provider.embed_text(src));
                ia_hits += *m.accurate ? 1 : 0;
                ++ia_count;
            }
        }
        report.instances.push_back(std::move(m));
    }
    if (!ltf_values.empty()) {
        report.ltf = mean_of(ltf_values);
    }
    if (!ltc_values.empty()) {
        report.ltc = mean_of(ltc_values);
    }
    if (ia_count > 0) {
        report.ia = static_cast<double>(ia_hits) / static_cast<double>(ia_count);
    }
    // Instances absent from every frame have no embedding and drop out of CIA.
    if (!present.empty()) {
        std::vector<InstanceCrops> kept;
        std::vector<std::string> kept_targets;
        report.instance_order.clear();
        for (auto i : present) {
            kept.push_back(crops[i]);
            kept_targets.push_back(targets[i]);
            report.instance_order.push_back(crops[i].instance_id);
        }
        const SimilarityMatrix s = similarity_matrix(kept, kept_targets, provider);
        report.cia = cia_score(s);
        report.similarity.assign(s.values().begin(), s.values().end());
    }

    if (!input.global_target_caption.empty()) {
        const auto g = global_scores(input.edited, input.global_source_caption, input.global_target_caption, provider);
        report.gtc = g.gtc;
        report.gtf = g.gtf;
        if (!input.global_source_caption.empty()) {
            report.fa = g.fa;
        }
    }

    if (!input.source.empty()) {
        INSTEDIT_CHECK(input.source.size() == frames, DataError,
                       "source has " + std::to_string(input.source.size()) + " frames, edited has " +
                           std::to_string(frames));
        std::vector<double> per_frame;
        for (std::size_t f = 0; f < frames; ++f) {
            BinaryMask inst(input.edited[f].height, input.edited[f].width, 0);
            for (const auto& e : input.instances) {
                for (std::size_t p = 0; p < inst.bits.size(); ++p) {
                    inst.bits[p] |= e.masks[f].bits[p];
                }
            }
            per_frame.push_back(background_ssim(input.source[f], input.edited[f], inst));
        }
        report.ssim = mean_of(per_frame);
        if (perceptual != nullptr) {
            std::vector<double> d;
            for (std::size_t f = 0; f < frames; ++f) {
                d.push_back(perceptual->distance(input.source[f], input.edited[f]));
            }
            report.lpips = mean_of(d);
        }
    }
    return report;
}

std::string MetricsReport::to_json() const {
    auto opt = [](const auto& v) -> json { return v ? json(*v) : json(nullptr); };
    json doc;
    doc["cia"] = opt(cia);
    doc["ltf"] = opt(ltf);
    doc["ltc"] = opt(ltc);
    doc["ia"] = opt(ia);
    doc["gtc"] = opt(gtc);
    doc["gtf"] = opt(gtf);
    doc["fa"] = opt(fa);
    doc["ssim"] = opt(ssim);
    doc["lpips"] = opt(lpips);
    doc["similarity"] = {{"instances", instance_order}, {"values", similarity}};
    doc["instances"] = json::array();
    for (const auto& m : instances) {
        doc["instances"].push_back({{"id", m.instance_id},
                                    {"ltf", opt(m.ltf)},
                                    {"ltc", opt(m.ltc)},
                                    {"accurate", opt(m.accurate)},
                                    {"skipped_frames", m.skipped_frames}});
    }
    return doc.dump(2);
}

}  // namespace instedit
