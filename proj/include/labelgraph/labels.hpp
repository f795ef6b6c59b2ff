#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lg {

class FeatureMatrix;

// Class index reported for rows with no label mass.
inline constexpr std::int32_t kUndetermined = -1;

// Per-sample label record. Trusted samples form the clamped set; untrusted
// samples may still carry a (possibly noisy) given class.
struct LabelState {
    std::size_t num_classes = 2;
    std::vector<std::optional<std::int32_t>> given;
    std::vector<std::uint8_t> trusted;

    static LabelState unlabeled(std::size_t n, std::size_t num_classes);
    // Every sample carries its class, none trusted.
    static LabelState noisy(std::span<const std::int32_t> classes, std::size_t num_classes);

    std::size_t n() const { return given.size(); }
    std::size_t trusted_count() const;
    std::size_t labeled_count() const;

    void set_trusted(std::size_t i, std::int32_t cls);
    void set_untrusted(std::size_t i, std::int32_t cls);
    void clear(std::size_t i);

    // Throws Validation when an invariant is broken.
    void validate() const;

    bool operator==(const LabelState&) const = default;
};

// n x c propagation scores, row-major.
struct SoftLabelMatrix {
    std::size_t n = 0;
    std::size_t num_classes = 0;
    std::vector<double> scores;
    int iterations = 0;

    std::span<const double> row(std::size_t i) const { return {scores.data() + i * num_classes, num_classes}; }
    std::span<double> row(std::size_t i) { return {scores.data() + i * num_classes, num_classes}; }

    bool operator==(const SoftLabelMatrix&) const = default;
};

// Label file: one {"id", "class", "trusted"} object per line. Ids resolve
// against `features`; a missing "trusted" field reads as true. When
// `num_classes` is absent the class count is max(2, largest class + 1).
LabelState parse_label_file(std::string_view bytes, const FeatureMatrix& features,
                            std::optional<std::size_t> num_classes = std::nullopt);

// Lines for every sample with a given class, in feature order.
std::string format_label_file(const LabelState& labels, const FeatureMatrix& features);

// Soft-label export: {"id", "scores", "pseudo", "confidence"} per sample.
// Keys are written in sorted order.
std::string format_soft_labels(const SoftLabelMatrix& soft, const FeatureMatrix& features);

// Class indices keyed by id ({"id", "class"} lines), in feature order. Used
// for ground-truth files; every feature id must be present.
std::vector<std::int32_t> parse_truth_file(std::string_view bytes, const FeatureMatrix& features);

}  // namespace lg
