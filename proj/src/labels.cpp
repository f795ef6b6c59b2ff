#include "labelgraph/labels.hpp"

#include <algorithm>

#include <json.hpp>

#include "labelgraph/error.hpp"
#include "labelgraph/features.hpp"
#include "labelgraph/propagation.hpp"

namespace lg {

namespace {

template <typename Fn>
void for_each_json_line(std::string_view bytes, Fn&& fn) {
    std::size_t start = 0;
    std::size_t line_no = 0;
    while (start < bytes.size()) {
        std::size_t end = bytes.find('\n', start);
        if (end == std::string_view::npos) end = bytes.size();
        auto line = bytes.substr(start, end - start);
        start = end + 1;
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error&) {
            fail(ErrorKind::Format, "line " + std::to_string(line_no) + ": invalid JSON");
        }
        if (!obj.is_object()) fail(ErrorKind::Format, "line " + std::to_string(line_no) + ": expected an object");
        fn(obj, line_no);
    }
}

std::size_t resolve_id(const nlohmann::json& obj, const FeatureMatrix& features, std::size_t line_no) {
    if (!obj.contains("id") || !obj["id"].is_string()) {
        fail(ErrorKind::Format, "line " + std::to_string(line_no) + ": missing string \"id\"");
    }
    const auto id = obj["id"].get<std::string>();
    auto idx = features.index_of(id);
    if (!idx) fail(ErrorKind::Validation, "line " + std::to_string(line_no) + ": unknown id '" + id + "'");
    return *idx;
}

std::int32_t read_class(const nlohmann::json& obj, std::size_t line_no) {
    if (!obj.contains("class") || !obj["class"].is_number_integer()) {
        fail(ErrorKind::Format, "line " + std::to_string(line_no) + ": missing integer \"class\"");
    }
    const auto cls = obj["class"].get<std::int64_t>();
    if (cls < 0 || cls > INT32_MAX) fail(ErrorKind::Validation, "line " + std::to_string(line_no) + ": class out of range");
    return std::int32_t(cls);
}

}  // namespace

LabelState LabelState::unlabeled(std::size_t n, std::size_t num_classes) {
    LabelState s;
    s.num_classes = num_classes;
    s.given.assign(n, std::nullopt);
    s.trusted.assign(n, 0);
    return s;
}

LabelState LabelState::noisy(std::span<const std::int32_t> classes, std::size_t num_classes) {
    LabelState s = unlabeled(classes.size(), num_classes);
    for (std::size_t i = 0; i < classes.size(); ++i) s.given[i] = classes[i];
    return s;
}

std::size_t LabelState::trusted_count() const {
    return std::size_t(std::count(trusted.begin(), trusted.end(), std::uint8_t{1}));
}

std::size_t LabelState::labeled_count() const {
    return std::size_t(std::count_if(given.begin(), given.end(), [](const auto& g) { return g.has_value(); }));
}

void LabelState::set_trusted(std::size_t i, std::int32_t cls) {
    given[i] = cls;
    trusted[i] = 1;
}

void LabelState::set_untrusted(std::size_t i, std::int32_t cls) {
    given[i] = cls;
    trusted[i] = 0;
}

void LabelState::clear(std::size_t i) {
    given[i] = std::nullopt;
    trusted[i] = 0;
}

void LabelState::validate() const {
    if (num_classes < 2) fail(ErrorKind::Validation, "need at least 2 classes");
    if (trusted.size() != given.size()) fail(ErrorKind::Validation, "label state arrays differ in length");
    for (std::size_t i = 0; i < given.size(); ++i) {
        if (trusted[i] && !given[i]) fail(ErrorKind::Validation, "trusted sample " + std::to_string(i) + " has no class");
        if (given[i] && (*given[i] < 0 || std::size_t(*given[i]) >= num_classes)) {
            fail(ErrorKind::Validation, "sample " + std::to_string(i) + " has class outside [0, c)");
        }
    }
}

LabelState parse_label_file(std::string_view bytes, const FeatureMatrix& features,
                            std::optional<std::size_t> num_classes) {
    LabelState state = LabelState::unlabeled(features.n(), 2);
    std::int32_t max_class = -1;
    for_each_json_line(bytes, [&](const nlohmann::json& obj, std::size_t line_no) {
        const auto idx = resolve_id(obj, features, line_no);
        const auto cls = read_class(obj, line_no);
        bool trusted = true;
        if (obj.contains("trusted")) {
            if (!obj["trusted"].is_boolean()) fail(ErrorKind::Format, "line " + std::to_string(line_no) + ": \"trusted\" must be a boolean");
            trusted = obj["trusted"].get<bool>();
        }
        if (trusted) {
            state.set_trusted(idx, cls);
        } else {
            state.set_untrusted(idx, cls);
        }
        max_class = std::max(max_class, cls);
    });
    state.num_classes = num_classes.value_or(std::max<std::size_t>(2, std::size_t(max_class + 1)));
    state.validate();
    return state;
}

std::string format_label_file(const LabelState& labels, const FeatureMatrix& features) {
    std::string out;
    for (std::size_t i = 0; i < labels.n(); ++i) {
        if (!labels.given[i]) continue;
        nlohmann::json obj = {{"id", features.id(i)}, {"class", *labels.given[i]}, {"trusted", bool(labels.trusted[i])}};
        out += obj.dump();
        out += '\n';
    }
    return out;
}

std::string format_soft_labels(const SoftLabelMatrix& soft, const FeatureMatrix& features) {
    const auto pseudo = pseudo_labels(soft);
    std::string out;
    for (std::size_t i = 0; i < soft.n; ++i) {
        auto row = soft.row(i);
        nlohmann::json obj = {{"id", features.id(i)},
                              {"scores", std::vector<double>(row.begin(), row.end())},
                              {"pseudo", pseudo.classes[i]},
                              {"confidence", pseudo.confidence[i]}};
        out += obj.dump();
        out += '\n';
    }
    return out;
}

std::vector<std::int32_t> parse_truth_file(std::string_view bytes, const FeatureMatrix& features) {
    std::vector<std::int32_t> truth(features.n(), kUndetermined);
    for_each_json_line(bytes, [&](const nlohmann::json& obj, std::size_t line_no) {
        truth[resolve_id(obj, features, line_no)] = read_class(obj, line_no);
    });
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] == kUndetermined) fail(ErrorKind::Validation, "no ground-truth class for '" + features.id(i) + "'");
    }
    return truth;
}

}  // namespace lg
