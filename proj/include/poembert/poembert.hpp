#pragma once

#include "poembert/checkpoint.hpp"
#include "poembert/corpus.hpp"
#include "poembert/error.hpp"
#include "poembert/evaluation.hpp"
#include "poembert/gradcheck.hpp"
#include "poembert/io.hpp"
#include "poembert/model.hpp"
#include "poembert/optim.hpp"
#include "poembert/preprocess.hpp"
#include "poembert/rng.hpp"
#include "poembert/taxonomy.hpp"
#include "poembert/tensor.hpp"
#include "poembert/tokenizer.hpp"
#include "poembert/training.hpp"
#include "poembert/utf8.hpp"
#include "poembert/verse.hpp"
