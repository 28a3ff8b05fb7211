#pragma once

#define DPO_VERSION "1.0.0"
