#pragma once

#include "bpt/bpe.hpp"
#include "bpt/corpus.hpp"
#include "bpt/error.hpp"
#include "bpt/generate.hpp"
#include "bpt/instances.hpp"
#include "bpt/mesh_filter.hpp"
#include "bpt/normalize.hpp"
#include "bpt/rng.hpp"
#include "bpt/serialize.hpp"
#include "bpt/tokenizer.hpp"
#include "bpt/verify.hpp"
#include "bpt/vocab.hpp"
