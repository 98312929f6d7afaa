#include "mkdm/bench.hpp"

#include <type_traits>

#include "mkdm/parallel.hpp"

namespace mkdm {
namespace {

class PinThreads {
 public:
  PinThreads() : saved_(thread_count()) { set_thread_count(1); }
  ~PinThreads() { set_thread_count(saved_); }
  PinThreads(const PinThreads&) = delete;
  PinThreads& operator=(const PinThreads&) = delete;

 private:
  int saved_;
};

template <typename Model>
QpsResult run_benchmark(Model& model, std::span<const EncodedPair> pairs, const QpsOptions& options) {
  PinThreads pin;
  return qps_benchmark(
      [&](std::size_t first, std::size_t count) {
        if constexpr (std::is_same_v<Model, StudentModel<float>>) {
          predict(model, pairs.subspan(first, count), AggregationPolicy{}, options.batch_size);
        } else {
          predict_scores(model, pairs.subspan(first, count), options.batch_size);
        }
      },
      pairs.size(), options);
}

}  // namespace

QpsResult benchmark_student(StudentModel<float>& model, std::span<const EncodedPair> pairs, const QpsOptions& options) {
  return run_benchmark(model, pairs, options);
}

QpsResult benchmark_teacher(TeacherModel<float>& model, std::span<const EncodedPair> pairs, const QpsOptions& options) {
  return run_benchmark(model, pairs, options);
}

}  // namespace mkdm
