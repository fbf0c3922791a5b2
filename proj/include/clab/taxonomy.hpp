#pragma once

// Entity taxonomy of a business line and validation of experiment designs
// against it. A taxonomy declares entity types and strict one-to-many
// parent->child relationships (contract -> seat, account -> profile); a
// design is legal only if it randomizes at an entity and analyzes at that
// entity or one of its descendants.

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace clab {

struct TaxonomyEdge {
    std::string parent;
    std::string child;
};

struct Taxonomy {
    std::string name;
    std::vector<std::string> entities;  // declared order, unique
    std::vector<TaxonomyEdge> edges;    // acyclic, all 1:N

    bool contains(const std::string& entity) const;
    // True when `descendant` is reachable from `ancestor` through one or
    // more edges (strict: an entity is not its own descendant).
    bool is_descendant(const std::string& ancestor, const std::string& descendant) const;
};

// Parse and validate a taxonomy document. Throws std::runtime_error on
// parse errors, undeclared entities in edges, cycles, or a cardinality
// token other than "1:N".
Taxonomy taxonomy_from_json(const nlohmann::json& doc);
Taxonomy load_taxonomy(const std::filesystem::path& path);

struct VariantSpec {
    std::string name;
    double fraction = 0.0;
    bool is_control = false;
};

struct ExperimentDesign {
    std::string taxonomy_name;
    std::string randomization_entity;
    std::string analysis_entity;
    std::vector<std::string> targeting_entities;
    std::vector<VariantSpec> variants;  // ordered; exactly one control when valid

    const VariantSpec* control() const;
    std::vector<std::string> treatment_names() const;
    bool has_variant(const std::string& name) const;
};

ExperimentDesign design_from_json(const nlohmann::json& doc);
nlohmann::ordered_json design_to_json(const ExperimentDesign& design);

struct Violation {
    std::string code;
    std::string message;
};

struct ValidationVerdict {
    std::vector<Violation> violations;
    bool ok() const { return violations.empty(); }
};

// Checks entity membership, the randomization->analysis hierarchy, and the
// allocation invariants. Never throws; problems come back as violations.
ValidationVerdict validate_design(const ExperimentDesign& design, const Taxonomy& taxonomy);

}  // namespace clab
