// Copyright 2026 The xcodec-desk Authors
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

#pragma once

#include "xcodec/binary_io.hpp"
#include "xcodec/cli/app.hpp"
#include "xcodec/cli/ini.hpp"
#include "xcodec/cli/token_file.hpp"
#include "xcodec/codec/config.hpp"
#include "xcodec/codec/layers.hpp"
#include "xcodec/codec/losses.hpp"
#include "xcodec/codec/model.hpp"
#include "xcodec/diff/adam.hpp"
#include "xcodec/diff/grad_check.hpp"
#include "xcodec/diff/ops.hpp"
#include "xcodec/diff/sckp.hpp"
#include "xcodec/diff/tensor.hpp"
#include "xcodec/dsp/fft.hpp"
#include "xcodec/dsp/mel.hpp"
#include "xcodec/dsp/spectral.hpp"
#include "xcodec/dsp/stft.hpp"
#include "xcodec/dsp/wav.hpp"
#include "xcodec/error.hpp"
#include "xcodec/eval/abx.hpp"
#include "xcodec/eval/recon.hpp"
#include "xcodec/matrix.hpp"
#include "xcodec/rvq/quantizer.hpp"
#include "xcodec/semantic/features.hpp"
#include "xcodec/synth/corpus.hpp"
#include "xcodec/training/checkpoint.hpp"
#include "xcodec/training/trainer.hpp"
