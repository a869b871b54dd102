#include <doctest.h>

#include "subsweep/ibr.hpp"
