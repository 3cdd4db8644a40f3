#pragma once

#include "ifsm/chaos_game.hpp"
#include "ifsm/errors.hpp"
#include "ifsm/linalg.hpp"
#include "ifsm/model.hpp"
#include "ifsm/moments.hpp"
#include "ifsm/random.hpp"
#include "ifsm/report.hpp"
