#include "changen/event/events.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace changen::event {

using nlohmann::json;

TransitionMatrix::TransitionMatrix(std::vector<double> probs, int k,
                                   std::vector<std::string> class_names)
    : probs_(std::move(probs)), k_(k), class_names_(std::move(class_names)) {
    if (k_ < 2) throw ParameterError("TransitionMatrix: K must be >= 2");
    if (probs_.size() != static_cast<size_t>(k_) * k_)
        throw DimensionError("TransitionMatrix: must be square K x K");
    if (!class_names_.empty() && class_names_.size() != static_cast<size_t>(k_))
        throw DimensionError("TransitionMatrix: class_names length mismatch");
    for (int r = 0; r < k_; ++r) {
        double sum = 0.0;
        for (int c = 0; c < k_; ++c) {
            double p = prob(r, c);
            if (p < 0.0) throw ParameterError("TransitionMatrix: negative entry");
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-9)
            throw ParameterError("TransitionMatrix: row " + std::to_string(r) +
                                 " does not sum to 1");
    }
}

TransitionMatrix TransitionMatrix::uniform(int k) {
    std::vector<double> p(static_cast<size_t>(k) * k, 1.0 / k);
    return TransitionMatrix(std::move(p), k);
}

TransitionMatrix TransitionMatrix::identity(int k) {
    std::vector<double> p(static_cast<size_t>(k) * k, 0.0);
    for (int i = 0; i < k; ++i) p[static_cast<size_t>(i) * k + i] = 1.0;
    return TransitionMatrix(std::move(p), k);
}

TransitionMatrix TransitionMatrix::from_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("TransitionMatrix: cannot open " + path);
    std::vector<double> values;
    std::string line;
    int rows = 0, cols = -1;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        int c = 0;
        while (std::getline(ss, cell, ',')) {
            values.push_back(std::stod(cell));
            ++c;
        }
        if (cols < 0) cols = c;
        else if (c != cols) throw IoError("TransitionMatrix: ragged CSV row");
        ++rows;
    }
    if (rows != cols) throw DimensionError("TransitionMatrix: CSV grid must be square");
    return TransitionMatrix(std::move(values), rows);
}

TransitionMatrix TransitionMatrix::from_json_text(const std::string& text) {
    json j = json::parse(text);
    std::vector<std::vector<double>> rows = j.at("probs").get<std::vector<std::vector<double>>>();
    int k = static_cast<int>(rows.size());
    std::vector<double> flat;
    for (const auto& r : rows) {
        if (static_cast<int>(r.size()) != k)
            throw DimensionError("TransitionMatrix: probs must be square");
        flat.insert(flat.end(), r.begin(), r.end());
    }
    std::vector<std::string> names;
    if (j.contains("class_names")) names = j["class_names"].get<std::vector<std::string>>();
    return TransitionMatrix(std::move(flat), k, std::move(names));
}

int TransitionMatrix::sample_row(int from, Rng& rng) const {
    if (from < 0 || from >= k_) throw ParameterError("TransitionMatrix: row out of range");
    double u = rng.uniform();
    double cum = 0.0;
    int last_positive = -1;
    for (int c = 0; c < k_; ++c) {
        double p = prob(from, c);
        if (p <= 0.0) continue;
        last_positive = c;
        cum += p;
        if (u < cum) return c;
    }
    // u landed in the rounding tail; the row has at least one positive entry.
    return last_positive;
}

std::string to_string(EventKind kind) {
    switch (kind) {
        case EventKind::Create: return "create";
        case EventKind::Remove: return "remove";
        case EventKind::Edit: return "edit";
        case EventKind::ContourRemove: return "contour_remove";
    }
    return "?";
}

EventKind event_kind_from_string(const std::string& s) {
    if (s == "create") return EventKind::Create;
    if (s == "remove") return EventKind::Remove;
    if (s == "edit") return EventKind::Edit;
    if (s == "contour_remove") return EventKind::ContourRemove;
    throw ParameterError("unknown event kind: " + s);
}

void EventSpec::validate() const {
    if (selection_prob < 0.0 || selection_prob > 1.0)
        throw ParameterError("EventSpec: selection_prob must be in [0,1]");
    if (max_placement_attempts < 1)
        throw ParameterError("EventSpec: max_placement_attempts must be positive");
    if (kind == EventKind::Edit && !transition)
        throw ParameterError("EventSpec: edit requires a transition matrix");
    if (kind == EventKind::ContourRemove && dilation_radius < 0)
        throw ParameterError("EventSpec: contour_remove requires dilation_radius >= 0");
    if (connectivity != 4 && connectivity != 8)
        throw ParameterError("EventSpec: connectivity must be 4 or 8");
}

EventSpec EventSpec::from_json_text(const std::string& text) {
    json j = json::parse(text);
    EventSpec spec;
    spec.kind = event_kind_from_string(j.at("kind").get<std::string>());
    spec.selection_prob = j.value("selection_prob", 0.5);
    spec.rng_seed = j.value("rng_seed", uint64_t{0});
    spec.max_placement_attempts = j.value("max_placement_attempts", 32);
    spec.dilation_radius = j.value("dilation_radius", 1);
    spec.connectivity = j.value("connectivity", 8);
    if (j.contains("transition")) {
        if (j["transition"].is_string())
            spec.transition = TransitionMatrix::from_csv(j["transition"].get<std::string>());
        else
            spec.transition = TransitionMatrix::from_json_text(j["transition"].dump());
    }
    spec.validate();
    return spec;
}

namespace {

// Ascending-id Bernoulli pass; keeps selection independent of map layout.
std::vector<int32_t> select_instances(const InstanceMap& instances, double p, Rng& rng) {
    std::vector<int32_t> selected;
    for (const auto& [id, cls] : instances.classes) {
        (void)cls;
        if (rng.bernoulli(p)) selected.push_back(id);
    }
    return selected;
}

struct Shape {
    std::vector<std::pair<int, int>> cells;  // (dy, dx) relative to bbox origin
    int bh = 0, bw = 0;
};

Shape shape_of(const InstanceMap& instances, int32_t id) {
    int y0 = instances.height(), x0 = instances.width(), y1 = -1, x1 = -1;
    for (int y = 0; y < instances.height(); ++y)
        for (int x = 0; x < instances.width(); ++x)
            if (instances.data.at(y, x) == id) {
                y0 = std::min(y0, y); x0 = std::min(x0, x);
                y1 = std::max(y1, y); x1 = std::max(x1, x);
            }
    Shape s;
    if (y1 < 0) return s;
    s.bh = y1 - y0 + 1;
    s.bw = x1 - x0 + 1;
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x)
            if (instances.data.at(y, x) == id) s.cells.emplace_back(y - y0, x - x0);
    return s;
}

}  // namespace

EventOutcome simulate_create(const SemanticMask& mask, const InstanceMap& instances,
                             const EventSpec& spec) {
    spec.validate();
    if (spec.kind != EventKind::Create) throw ParameterError("simulate_create: wrong kind");
    Rng rng(spec.rng_seed);

    EventOutcome out;
    out.next_mask = mask;
    out.next_instances = instances;
    int32_t next_id = 0;
    for (const auto& [id, cls] : instances.classes) { (void)cls; next_id = std::max(next_id, id); }
    ++next_id;

    const int h = mask.height(), w = mask.width();
    for (int32_t id : select_instances(instances, spec.selection_prob, rng)) {
        Shape s = shape_of(instances, id);
        int cls = instances.classes.at(id);
        bool placed = false;
        for (int attempt = 0; attempt < spec.max_placement_attempts && !placed; ++attempt) {
            if (s.bh > h || s.bw > w) break;
            int ay = rng.uniform_int(0, h - s.bh);
            int ax = rng.uniform_int(0, w - s.bw);
            bool free = true;
            for (const auto& [dy, dx] : s.cells)
                if (out.next_mask.data.at(ay + dy, ax + dx) != mask.background_class) {
                    free = false;
                    break;
                }
            if (!free) continue;
            int32_t new_id = next_id++;
            for (const auto& [dy, dx] : s.cells) {
                out.next_mask.data.at(ay + dy, ax + dx) = static_cast<uint8_t>(cls);
                out.next_instances.data.at(ay + dy, ax + dx) = new_id;
            }
            out.next_instances.classes[new_id] = cls;
            out.log.push_back({new_id, "create", mask.background_class, cls});
            placed = true;
        }
        if (!placed) out.log.push_back({id, "skip", instances.classes.at(id), instances.classes.at(id)});
    }
    out.change = change_mask_of(mask, out.next_mask);
    return out;
}

EventOutcome simulate_remove(const SemanticMask& mask, const InstanceMap& instances,
                             const EventSpec& spec) {
    spec.validate();
    if (spec.kind != EventKind::Remove) throw ParameterError("simulate_remove: wrong kind");
    Rng rng(spec.rng_seed);

    EventOutcome out;
    out.next_mask = mask;
    out.next_instances = instances;
    for (int32_t id : select_instances(instances, spec.selection_prob, rng)) {
        int cls = instances.classes.at(id);
        for (int y = 0; y < mask.height(); ++y)
            for (int x = 0; x < mask.width(); ++x)
                if (instances.data.at(y, x) == id) {
                    out.next_mask.data.at(y, x) = static_cast<uint8_t>(mask.background_class);
                    out.next_instances.data.at(y, x) = 0;
                }
        out.next_instances.classes.erase(id);
        out.log.push_back({id, "remove", cls, mask.background_class});
    }
    out.change = change_mask_of(mask, out.next_mask);
    return out;
}

EventOutcome simulate_edit(const SemanticMask& mask, const InstanceMap& instances,
                           const EventSpec& spec) {
    spec.validate();
    if (spec.kind != EventKind::Edit) throw ParameterError("simulate_edit: wrong kind");
    const TransitionMatrix& tm = *spec.transition;
    if (tm.num_classes() != mask.num_classes)
        throw ParameterError("simulate_edit: transition matrix K mismatch");
    Rng rng(spec.rng_seed);

    EventOutcome out;
    out.next_mask = mask;
    out.next_instances = instances;
    for (const auto& [id, cls] : instances.classes) {
        if (!rng.bernoulli(spec.selection_prob)) {
            out.log.push_back({id, "keep", cls, cls});
            continue;
        }
        int new_cls = tm.sample_row(cls, rng);
        if (new_cls != cls) {
            for (int y = 0; y < mask.height(); ++y)
                for (int x = 0; x < mask.width(); ++x)
                    if (instances.data.at(y, x) == id)
                        out.next_mask.data.at(y, x) = static_cast<uint8_t>(new_cls);
            out.next_instances.classes[id] = new_cls;
            out.log.push_back({id, "edit", cls, new_cls});
        } else {
            out.log.push_back({id, "keep", cls, cls});
        }
    }
    out.change = change_mask_of(mask, out.next_mask);
    return out;
}

EventOutcome simulate_contour_remove(const ContourMap& contour, const InstanceMap& instances,
                                     const EventSpec& spec) {
    spec.validate();
    if (spec.kind != EventKind::ContourRemove)
        throw ParameterError("simulate_contour_remove: wrong kind");
    if (contour.height() != instances.height() || contour.width() != instances.width())
        throw DimensionError("simulate_contour_remove: shape mismatch");
    Rng rng(spec.rng_seed);

    EventOutcome out;
    out.next_instances = instances;
    out.change = ChangeMask(contour.height(), contour.width());
    for (int32_t id : select_instances(instances, spec.selection_prob, rng)) {
        int cls = instances.classes.at(id);
        for (size_t i = 0; i < instances.data.size(); ++i)
            if (instances.data[i] == id) {
                out.change.data[i] = 1;
                out.next_instances.data[i] = 0;
            }
        out.next_instances.classes.erase(id);
        out.log.push_back({id, "remove", cls, 0});
    }
    ChangeMask dilated = dilate(out.change, spec.dilation_radius);
    ContourMap next(contour.height(), contour.width());
    for (size_t i = 0; i < contour.data.size(); ++i)
        next.data[i] = dilated.data[i] ? 0 : contour.data[i];
    out.next_contour = std::move(next);
    // next_mask is unused for contour events; keep a valid placeholder.
    out.next_mask = SemanticMask(contour.height(), contour.width(), 2, 0);
    return out;
}

EventOutcome simulate_event(const SemanticMask& mask, const InstanceMap& instances,
                            const EventSpec& spec) {
    switch (spec.kind) {
        case EventKind::Create: return simulate_create(mask, instances, spec);
        case EventKind::Remove: return simulate_remove(mask, instances, spec);
        case EventKind::Edit: return simulate_edit(mask, instances, spec);
        case EventKind::ContourRemove:
            throw ParameterError("simulate_event: contour_remove needs a ContourMap input");
    }
    throw ParameterError("simulate_event: unknown kind");
}

std::vector<EventOutcome> simulate_sequence(const SemanticMask& mask0,
                                            const InstanceMap& instances0,
                                            const std::vector<EventSpec>& specs) {
    if (specs.empty()) throw ParameterError("simulate_sequence: specs must be non-empty");
    std::vector<EventOutcome> outcomes;
    SemanticMask mask = mask0;
    InstanceMap instances = instances0;
    for (const EventSpec& spec : specs) {
        outcomes.push_back(simulate_event(mask, instances, spec));
        mask = outcomes.back().next_mask;
        instances = outcomes.back().next_instances;
    }
    return outcomes;
}

}  // namespace changen::event
