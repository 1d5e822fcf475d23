#pragma once

#define NESTMC_VERSION "0.1.0"
