#pragma once

#include "ppn/autodiff.hpp"
#include "ppn/datagen.hpp"
#include "ppn/dataset.hpp"
#include "ppn/embedding.hpp"
#include "ppn/io.hpp"
#include "ppn/metatest.hpp"
#include "ppn/optim.hpp"
#include "ppn/protoprop.hpp"
#include "ppn/taxonomy.hpp"
#include "ppn/tensor.hpp"
#include "ppn/trainer.hpp"
