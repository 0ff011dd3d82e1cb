#include "arf/data.hpp"

#include <string>

namespace arf {

PromptTable::PromptTable(std::vector<ClassId> class_ids, Matrix prompt_features)
    : class_ids_(std::move(class_ids)), features_(std::move(prompt_features)) {
  if (class_ids_.size() != features_.rows()) {
    throw DimensionError("prompt table: one prompt row per class required");
  }
  for (std::size_t i = 0; i < class_ids_.size(); ++i) {
    if (!row_of_.emplace(class_ids_[i], i).second) {
      throw InvalidArgumentError("prompt table: duplicate class id " +
                                 std::to_string(class_ids_[i]));
    }
  }
}

std::size_t PromptTable::row_of(ClassId c) const {
  auto it = row_of_.find(c);
  if (it == row_of_.end()) {
    throw InvalidArgumentError("prompt table has no class " + std::to_string(c));
  }
  return it->second;
}

}  // namespace arf
