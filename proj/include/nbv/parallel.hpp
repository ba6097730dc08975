#pragma once

namespace nbv {

// Effective OpenMP thread count. Honors the NBV_THREADS environment variable
// (values < 1 are treated as 1) and falls back to the OpenMP default. Returns
// 1 when built without OpenMP.
int effective_threads();

// Applies effective_threads() to the OpenMP runtime. Call once at startup;
// also safe to call again after changing the environment in tests.
void configure_threads();

}  // namespace nbv
