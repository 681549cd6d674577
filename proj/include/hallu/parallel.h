#ifndef HALLU_PARALLEL_H_
#define HALLU_PARALLEL_H_

#include <functional>

namespace hallu {

// Number of workers to use when the caller asks for 0 ("hardware default").
int default_workers();

// Runs fn(i) for i in [0, n) on up to `workers` threads. Tasks must write
// disjoint outputs; results are then independent of scheduling. The first
// exception thrown by any task is rethrown on the calling thread.
void parallel_for(int n, int workers, const std::function<void(int)>& fn);

}  // namespace hallu

#endif  // HALLU_PARALLEL_H_
