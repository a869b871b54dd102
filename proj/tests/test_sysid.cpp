#include <doctest.h>

#include "subsweep/sysid.hpp"
