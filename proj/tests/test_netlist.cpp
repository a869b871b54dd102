#include <doctest.h>

#include "subsweep/netlist.hpp"
