#pragma once

// Umbrella header for the vineyard LiDAR place-recognition toolkit.

#include "vinepr/autodiff.hpp"
#include "vinepr/common.hpp"
#include "vinepr/dataset.hpp"
#include "vinepr/describe.hpp"
#include "vinepr/descriptor_head.hpp"
#include "vinepr/descriptor_store.hpp"
#include "vinepr/evaluate.hpp"
#include "vinepr/fpfh.hpp"
#include "vinepr/pcd.hpp"
#include "vinepr/point_cloud.hpp"
#include "vinepr/ranking_loss.hpp"
#include "vinepr/scan_context.hpp"
#include "vinepr/split.hpp"
#include "vinepr/synthetic.hpp"
#include "vinepr/train.hpp"
