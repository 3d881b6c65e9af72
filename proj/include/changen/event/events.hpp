#pragma once

#include <optional>
#include <string>
#include <vector>

#include "changen/core/rng.hpp"
#include "changen/scene/masks.hpp"

namespace changen::event {

using scene::ChangeMask;
using scene::ContourMap;
using scene::InstanceMap;
using scene::SemanticMask;

// Row-stochastic K x K matrix driving attribute-edit events.
class TransitionMatrix {
public:
    TransitionMatrix(std::vector<double> probs, int k,
                     std::vector<std::string> class_names = {});

    static TransitionMatrix uniform(int k);
    static TransitionMatrix identity(int k);
    static TransitionMatrix from_csv(const std::string& path);
    static TransitionMatrix from_json_text(const std::string& text);

    int num_classes() const { return k_; }
    double prob(int from, int to) const { return probs_[static_cast<size_t>(from) * k_ + to]; }
    const std::vector<std::string>& class_names() const { return class_names_; }

    // Inverse-CDF draw over row `from`. Never returns a class whose row
    // probability is exactly zero.
    int sample_row(int from, Rng& rng) const;

private:
    std::vector<double> probs_;
    int k_;
    std::vector<std::string> class_names_;
};

enum class EventKind { Create, Remove, Edit, ContourRemove };

std::string to_string(EventKind kind);
EventKind event_kind_from_string(const std::string& s);

struct EventSpec {
    EventKind kind = EventKind::Remove;
    double selection_prob = 0.5;
    uint64_t rng_seed = 0;
    int max_placement_attempts = 32;                // create only
    std::optional<TransitionMatrix> transition;     // edit only
    int dilation_radius = 1;                        // contour_remove only
    int connectivity = 8;

    void validate() const;
    static EventSpec from_json_text(const std::string& text);
};

struct LogEntry {
    int32_t instance_id;
    std::string action;  // "create", "remove", "edit", "keep", "skip"
    int old_class;
    int new_class;
};

struct EventOutcome {
    SemanticMask next_mask;                  // mask-valued events
    std::optional<ContourMap> next_contour;  // contour_remove only
    ChangeMask change;
    InstanceMap next_instances;
    std::vector<LogEntry> log;
};

// Paste copies of uniformly selected instances into background area.
// Placements that cannot find a free spot within max_placement_attempts
// draws are skipped (never an error).
EventOutcome simulate_create(const SemanticMask& mask, const InstanceMap& instances,
                             const EventSpec& spec);

// Selected instances' supports become background.
EventOutcome simulate_remove(const SemanticMask& mask, const InstanceMap& instances,
                             const EventSpec& spec);

// Each instance independently re-draws its class from the transition row of
// its current class; geometry is untouched.
EventOutcome simulate_edit(const SemanticMask& mask, const InstanceMap& instances,
                           const EventSpec& spec);

// Self-supervised event: remove instances, dilate the change mask and erase
// the contour inside it, keeping bitemporal contours correspondence-correct.
EventOutcome simulate_contour_remove(const ContourMap& contour, const InstanceMap& instances,
                                     const EventSpec& spec);

EventOutcome simulate_event(const SemanticMask& mask, const InstanceMap& instances,
                            const EventSpec& spec);

// Chained application; outcome k feeds event k+1.
std::vector<EventOutcome> simulate_sequence(const SemanticMask& mask0,
                                            const InstanceMap& instances0,
                                            const std::vector<EventSpec>& specs);

}  // namespace changen::event
