#include "clab/taxonomy.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace clab {

bool Taxonomy::contains(const std::string& entity) const {
    return std::find(entities.begin(), entities.end(), entity) != entities.end();
}

bool Taxonomy::is_descendant(const std::string& ancestor, const std::string& descendant) const {
    // Iterative DFS over the (small) edge list.
    std::vector<std::string> stack{ancestor};
    std::unordered_set<std::string> seen;
    while (!stack.empty()) {
        const std::string node = stack.back();
        stack.pop_back();
        for (const auto& edge : edges) {
            if (edge.parent != node) continue;
            if (edge.child == descendant) return true;
            if (seen.insert(edge.child).second) stack.push_back(edge.child);
        }
    }
    return false;
}

namespace {

void check_acyclic(const Taxonomy& taxonomy) {
    // Kahn's algorithm; leftover nodes mean a cycle.
    std::unordered_map<std::string, int> indegree;
    for (const auto& e : taxonomy.entities) indegree[e] = 0;
    for (const auto& edge : taxonomy.edges) indegree[edge.child]++;
    std::vector<std::string> queue;
    for (const auto& [node, deg] : indegree) {
        if (deg == 0) queue.push_back(node);
    }
    std::size_t removed = 0;
    while (!queue.empty()) {
        const std::string node = queue.back();
        queue.pop_back();
        ++removed;
        for (const auto& edge : taxonomy.edges) {
            if (edge.parent == node && --indegree[edge.child] == 0) {
                queue.push_back(edge.child);
            }
        }
    }
    if (removed != taxonomy.entities.size()) {
        throw std::runtime_error("taxonomy '" + taxonomy.name + "': edge graph contains a cycle");
    }
}

}  // namespace

Taxonomy taxonomy_from_json(const nlohmann::json& doc) {
    if (!doc.is_object()) throw std::runtime_error("taxonomy document must be a JSON object");
    Taxonomy t;
    t.name = doc.value("name", std::string{});
    if (t.name.empty()) throw std::runtime_error("taxonomy document missing 'name'");
    if (!doc.contains("entities") || !doc["entities"].is_array()) {
        throw std::runtime_error("taxonomy document missing 'entities' array");
    }
    std::set<std::string> seen;
    for (const auto& item : doc["entities"]) {
        if (!item.is_string()) throw std::runtime_error("taxonomy entities must be strings");
        const std::string name = item.get<std::string>();
        if (name.empty()) throw std::runtime_error("taxonomy entity name cannot be empty");
        if (seen.insert(name).second) t.entities.push_back(name);
    }
    if (doc.contains("edges")) {
        if (!doc["edges"].is_array()) throw std::runtime_error("taxonomy 'edges' must be an array");
        for (const auto& item : doc["edges"]) {
            TaxonomyEdge edge;
            edge.parent = item.value("parent", std::string{});
            edge.child = item.value("child", std::string{});
            if (edge.parent.empty() || edge.child.empty()) {
                throw std::runtime_error("taxonomy edge needs 'parent' and 'child'");
            }
            const std::string cardinality = item.value("cardinality", std::string{"1:N"});
            if (cardinality != "1:N") {
                throw std::runtime_error("taxonomy edge " + edge.parent + "->" + edge.child +
                                         ": unsupported cardinality '" + cardinality +
                                         "' (only 1:N relationships are valid)");
            }
            for (const auto& endpoint : {edge.parent, edge.child}) {
                if (!t.contains(endpoint)) {
                    throw std::runtime_error("taxonomy edge references undeclared entity '" +
                                             endpoint + "'");
                }
            }
            t.edges.push_back(edge);
        }
    }
    check_acyclic(t);
    return t;
}

Taxonomy load_taxonomy(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open taxonomy file: " + path.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("taxonomy parse error in " + path.string() + ": " + e.what());
    }
    return taxonomy_from_json(doc);
}

const VariantSpec* ExperimentDesign::control() const {
    for (const auto& v : variants) {
        if (v.is_control) return &v;
    }
    return nullptr;
}

std::vector<std::string> ExperimentDesign::treatment_names() const {
    std::vector<std::string> names;
    for (const auto& v : variants) {
        if (!v.is_control) names.push_back(v.name);
    }
    return names;
}

bool ExperimentDesign::has_variant(const std::string& name) const {
    return std::any_of(variants.begin(), variants.end(),
                       [&](const VariantSpec& v) { return v.name == name; });
}

ExperimentDesign design_from_json(const nlohmann::json& doc) {
    if (!doc.is_object()) throw std::runtime_error("design must be a JSON object");
    ExperimentDesign d;
    d.taxonomy_name = doc.value("taxonomy", std::string{});
    d.randomization_entity = doc.value("randomization_entity", std::string{});
    d.analysis_entity = doc.value("analysis_entity", std::string{});
    if (doc.contains("targeting_entities")) {
        for (const auto& item : doc["targeting_entities"]) {
            d.targeting_entities.push_back(item.get<std::string>());
        }
    }
    if (!doc.contains("variants") || !doc["variants"].is_array()) {
        throw std::runtime_error("design missing 'variants' array");
    }
    for (const auto& item : doc["variants"]) {
        VariantSpec v;
        v.name = item.value("name", std::string{});
        if (v.name.empty()) throw std::runtime_error("design variant missing 'name'");
        if (!item.contains("fraction") || !item["fraction"].is_number()) {
            throw std::runtime_error("design variant '" + v.name + "' missing numeric 'fraction'");
        }
        v.fraction = item["fraction"].get<double>();
        v.is_control = item.value("is_control", false);
        d.variants.push_back(v);
    }
    return d;
}

nlohmann::ordered_json design_to_json(const ExperimentDesign& design) {
    nlohmann::ordered_json doc;
    doc["taxonomy"] = design.taxonomy_name;
    doc["randomization_entity"] = design.randomization_entity;
    doc["analysis_entity"] = design.analysis_entity;
    doc["targeting_entities"] = design.targeting_entities;
    doc["variants"] = nlohmann::ordered_json::array();
    for (const auto& v : design.variants) {
        doc["variants"].push_back({{"name", v.name},
                                   {"fraction", v.fraction},
                                   {"is_control", v.is_control}});
    }
    return doc;
}

ValidationVerdict validate_design(const ExperimentDesign& design, const Taxonomy& taxonomy) {
    ValidationVerdict verdict;
    auto add = [&](std::string code, std::string message) {
        verdict.violations.push_back({std::move(code), std::move(message)});
    };

    if (!design.taxonomy_name.empty() && design.taxonomy_name != taxonomy.name) {
        add("TAXONOMY_MISMATCH", "design references taxonomy '" + design.taxonomy_name +
                                     "' but '" + taxonomy.name + "' was supplied");
    }

    auto check_membership = [&](const std::string& entity, const std::string& role) {
        if (entity.empty()) {
            add("MISSING_ENTITY", role + " entity is not set");
            return false;
        }
        if (!taxonomy.contains(entity)) {
            add("FOREIGN_ENTITY", role + " entity '" + entity + "' is not part of taxonomy '" +
                                      taxonomy.name + "'");
            return false;
        }
        return true;
    };

    const bool rand_ok = check_membership(design.randomization_entity, "randomization");
    const bool analysis_ok = check_membership(design.analysis_entity, "analysis");
    for (const auto& entity : design.targeting_entities) {
        check_membership(entity, "targeting");
    }

    if (rand_ok && analysis_ok && design.analysis_entity != design.randomization_entity) {
        if (!taxonomy.is_descendant(design.randomization_entity, design.analysis_entity)) {
            if (taxonomy.is_descendant(design.analysis_entity, design.randomization_entity)) {
                add("INVERTED_HIERARCHY",
                    "cannot randomize at '" + design.randomization_entity + "' and analyze at its "
                    "ancestor '" + design.analysis_entity + "'; randomization must be at the "
                    "higher-order entity");
            } else {
                add("UNRELATED_ENTITIES",
                    "analysis entity '" + design.analysis_entity + "' is not a descendant of "
                    "randomization entity '" + design.randomization_entity + "'");
            }
        }
    }

    if (design.variants.size() < 2) {
        add("TOO_FEW_VARIANTS", "design needs at least two variants");
    }
    std::size_t control_count = 0;
    double allocation_sum = 0.0;
    std::set<std::string> names;
    for (const auto& v : design.variants) {
        if (v.is_control) ++control_count;
        if (!(v.fraction > 0.0 && v.fraction <= 1.0)) {
            add("ALLOCATION_FRACTION_OUT_OF_RANGE",
                "variant '" + v.name + "' allocation must be in (0, 1]");
        }
        allocation_sum += v.fraction;
        if (!names.insert(v.name).second) {
            add("DUPLICATE_VARIANT", "variant name '" + v.name + "' appears twice");
        }
    }
    if (control_count != 1) {
        add("CONTROL_COUNT", "design needs exactly one control variant, found " +
                                 std::to_string(control_count));
    }
    if (allocation_sum > 1.0 + 1e-9) {
        add("ALLOCATION_SUM_EXCEEDS_ONE", "variant allocations sum to more than 1.0");
    }
    return verdict;
}

}  // namespace clab
