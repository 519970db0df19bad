// Copyright 2026 The texgen Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef TEXGEN_TESTS_SUPPORT_ALLOC_PROBE_H_
#define TEXGEN_TESTS_SUPPORT_ALLOC_PROBE_H_

#include <cstddef>

namespace texgen::testing {

// Number of global operator new calls so far in this process. Only valid in
// binaries that link alloc_probe.cc.
std::size_t AllocationCount();

}  // namespace texgen::testing

#endif  // TEXGEN_TESTS_SUPPORT_ALLOC_PROBE_H_
