#pragma once

#include "deeponet/diffkit/params.hpp"
#include "deeponet/diffkit/tape.hpp"
#include "deeponet/diffkit/ops.hpp"
#include "deeponet/diffkit/taylor.hpp"
