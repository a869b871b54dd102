#include <doctest.h>

#include "subsweep/probe.hpp"
