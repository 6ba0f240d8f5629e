#pragma once

#include "trajlabel/camera_label.hpp"
#include "trajlabel/config.hpp"
#include "trajlabel/fusion_crf.hpp"
#include "trajlabel/geometry.hpp"
#include "trajlabel/image.hpp"
#include "trajlabel/ingest.hpp"
#include "trajlabel/lidar_label.hpp"
#include "trajlabel/metrics.hpp"
#include "trajlabel/permutohedral.hpp"
#include "trajlabel/pipeline.hpp"
#include "trajlabel/synth.hpp"
#include "trajlabel/trajectory_fit.hpp"
