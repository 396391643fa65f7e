#include "opaseg/taxonomy.hpp"

#include <cmath>
#include <set>

namespace opaseg {

ClassTaxonomy::ClassTaxonomy(std::vector<ClassEntry> entries) : entries_(std::move(entries)) {
    if (entries_.size() != 12)
        throw ValidationError("taxonomy must have exactly 12 entries, got " +
                              std::to_string(entries_.size()));
    std::set<int> seen;
    double total = 0.0;
    for (const auto& e : entries_) {
        if (e.class_id < -1 || e.class_id > 10)
            throw ValidationError("class id out of range [-1,10]: " + std::to_string(e.class_id));
        if (!seen.insert(e.class_id).second)
            throw ValidationError("duplicate class id " + std::to_string(e.class_id));
        if (e.group_id < -1 || e.group_id > 4)
            throw ValidationError("group id out of range [-1,4]: " + std::to_string(e.group_id));
        if (e.prevalence < 0.0 || e.prevalence > 1.0)
            throw ValidationError("prevalence out of [0,1] for class " + std::to_string(e.class_id));
        total += e.prevalence;
        group_by_class_[e.class_id + 1] = e.group_id;
    }
    if (std::fabs(total - 1.0) > 1e-4)
        throw ValidationError("prevalences must sum to 1 within 1e-4, got " + std::to_string(total));
}

const ClassTaxonomy& ClassTaxonomy::standard() {
    static const ClassTaxonomy tax{{
        {-1, "Unlabelled", -1, 0.0312350},
        {0, "Background", 0, 0.9470900},
        {1, "Left Lung", 1, 0.0048229},
        {2, "Right Lung", 1, 0.0052713},
        {3, "Pleural Effusion", 0, 0.0002021},
        {4, "Lymphadenopathy", 0, 0.0000002},
        {5, "Pure Ground Glass Opacification", 2, 0.0033230},
        {6, "GGO w/ Smooth Interlobular Septal Thickening", 3, 0.0004404},
        {7, "GGO w/ Intralobular Lines (Crazy Paving)", 3, 0.0044893},
        {8, "Organizing Pneumonia Pattern", 4, 0.0012062},
        {9, "GGO w/ Peripheral Consolidation (Atoll Sign)", 4, 0.0001665},
        {10, "Consolidation", 4, 0.0017524},
    }};
    return tax;
}

bool ClassTaxonomy::valid_class(int class_id) const {
    return class_id >= -1 && class_id <= 10;
}

int ClassTaxonomy::group_of(int class_id) const {
    if (!valid_class(class_id))
        throw ValidationError("unknown class id " + std::to_string(class_id));
    return group_by_class_[class_id + 1];
}

const std::string& ClassTaxonomy::name_of(int class_id) const {
    for (const auto& e : entries_)
        if (e.class_id == class_id) return e.name;
    throw ValidationError("unknown class id " + std::to_string(class_id));
}

std::vector<int> ClassTaxonomy::labelled_classes() const {
    std::vector<int> out;
    for (int c = 0; c <= 10; ++c) out.push_back(c);
    return out;
}

std::vector<int> ClassTaxonomy::groups() const {
    std::vector<int> out;
    for (int g = 0; g <= 4; ++g) out.push_back(g);
    return out;
}

} // namespace opaseg
