#include <algorithm>

#include "pivotmt/nmt/model.hpp"

namespace pivotmt::nmt {

TrainingBatch make_batch(std::span<const EncodedRow> rows, std::size_t n_sources) {
  TrainingBatch batch;
  const Index n_rows = static_cast<Index>(rows.size());
  batch.sources.resize(n_sources);
  batch.source_lengths.assign(n_sources, std::vector<int>(rows.size(), 0));
  batch.mask.assign(rows.size(), std::vector<bool>(n_sources, false));
  std::vector<Index> widths(n_sources, 1);
  Index target_width = 2;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.sources.size() != n_sources) {
      throw DataError("DimensionMismatch", "row " + std::to_string(r) + " has " +
                                               std::to_string(row.sources.size()) + " sources");
    }
    bool any = false;
    for (std::size_t n = 0; n < n_sources; ++n) {
      if (!row.sources[n] || row.sources[n]->empty()) continue;
      any = true;
      batch.mask[r][n] = true;
      batch.source_lengths[n][r] = static_cast<int>(row.sources[n]->size());
      widths[n] = std::max(widths[n], static_cast<Index>(row.sources[n]->size()));
    }
    if (!any) throw DataError("NoSourceProvided", "row " + std::to_string(r) + " has no source");
    target_width = std::max(target_width, static_cast<Index>(row.target.size() + 2));
  }
  for (std::size_t n = 0; n < n_sources; ++n) {
    batch.sources[n] = IdMatrix::Constant(n_rows, widths[n], Vocabulary::kPad);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (!batch.mask[r][n]) continue;
      const auto& ids = *rows[r].sources[n];
      for (std::size_t s = 0; s < ids.size(); ++s) {
        batch.sources[n](static_cast<Index>(r), static_cast<Index>(s)) = ids[s];
      }
    }
  }
  batch.target = IdMatrix::Constant(n_rows, target_width, Vocabulary::kPad);
  batch.target_lengths.resize(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& ids = rows[r].target;
    const Index row = static_cast<Index>(r);
    batch.target(row, 0) = Vocabulary::kBos;
    for (std::size_t t = 0; t < ids.size(); ++t) batch.target(row, static_cast<Index>(t + 1)) = ids[t];
    batch.target(row, static_cast<Index>(ids.size() + 1)) = Vocabulary::kEos;
    batch.target_lengths[r] = static_cast<int>(ids.size() + 2);
  }
  return batch;
}

}  // namespace pivotmt::nmt
