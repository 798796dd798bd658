#pragma once

#include "renoscan/cnn.hpp"
#include "renoscan/config.hpp"
#include "renoscan/descriptors.hpp"
#include "renoscan/error.hpp"
#include "renoscan/eval.hpp"
#include "renoscan/featuremaps.hpp"
#include "renoscan/image_io.hpp"
#include "renoscan/imaging.hpp"
#include "renoscan/normalize.hpp"
#include "renoscan/phantom.hpp"
#include "renoscan/pipeline.hpp"
#include "renoscan/svm.hpp"
#include "renoscan/table.hpp"
#include "renoscan/version.hpp"
