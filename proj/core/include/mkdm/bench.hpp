#pragma once

#include <span>

#include "mkdm/metrics.hpp"
#include "mkdm/model.hpp"

namespace mkdm {

/// Eval-mode inference throughput over `pairs`, pinned to one worker thread.
/// Each batch is cropped to its longest member, as in evaluation.
QpsResult benchmark_student(StudentModel<float>& model, std::span<const EncodedPair> pairs,
                            const QpsOptions& options = {});
QpsResult benchmark_teacher(TeacherModel<float>& model, std::span<const EncodedPair> pairs,
                            const QpsOptions& options = {});

}  // namespace mkdm
