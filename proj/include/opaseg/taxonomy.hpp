#pragma once

#include <string>
#include <vector>

#include "opaseg/errors.hpp"

namespace opaseg {

constexpr int kUnlabelled = -1;

struct ClassEntry {
    int class_id;     // -1..10
    std::string name;
    int group_id;     // -1..4
    double prevalence; // fraction of all pixels, in [0,1]
};

// The 12-entry annotation taxonomy. Classes are the labels the annotators
// draw; groups are the 5 clinically relevant targets the models train on
// (-1 unlabelled, 0 background/non-pulmonary, 1 lung, 2 pure GGO,
// 3 GGO with septal lines, 4 consolidation patterns).
class ClassTaxonomy {
public:
    explicit ClassTaxonomy(std::vector<ClassEntry> entries);

    static const ClassTaxonomy& standard();

    const std::vector<ClassEntry>& entries() const { return entries_; }
    bool valid_class(int class_id) const;
    int group_of(int class_id) const; // throws ValidationError on unknown id
    const std::string& name_of(int class_id) const;

    // Class IDs excluding unlabelled, ascending (0..10).
    std::vector<int> labelled_classes() const;
    // Group IDs excluding unlabelled, ascending (0..4).
    std::vector<int> groups() const;

private:
    std::vector<ClassEntry> entries_;
    int group_by_class_[12]; // indexed by class_id + 1
};

// Opacity groups: everything that counts as pulmonary opacification.
inline const std::vector<int>& default_opacity_groups() {
    static const std::vector<int> g{2, 3, 4};
    return g;
}

} // namespace opaseg
