#pragma once

#include <array>
#include <cstddef>
#include <string_view>

#include "segfusion/core.hpp"

namespace segfusion {

// The 13-class indoor label space used by default.
namespace classes {
inline constexpr ClassIndex kBed = 0;
inline constexpr ClassIndex kBooks = 1;
inline constexpr ClassIndex kCeiling = 2;
inline constexpr ClassIndex kChair = 3;
inline constexpr ClassIndex kFloor = 4;
inline constexpr ClassIndex kFurniture = 5;
inline constexpr ClassIndex kObjects = 6;
inline constexpr ClassIndex kPainting = 7;
inline constexpr ClassIndex kSofa = 8;
inline constexpr ClassIndex kTable = 9;
inline constexpr ClassIndex kTv = 10;
inline constexpr ClassIndex kWall = 11;
inline constexpr ClassIndex kWindow = 12;

inline constexpr std::array<std::string_view, 13> kNames = {
    "bed",     "books",    "ceiling", "chair", "floor", "furniture", "objects",
    "painting", "sofa",    "table",   "tv",    "wall",  "window"};
}  // namespace classes

inline constexpr std::array<Rgb, 16> kClassPalette = {{
    {0, 0, 255},     {232, 88, 47},   {0, 217, 0},     {148, 0, 240},
    {222, 241, 23},  {255, 205, 205}, {0, 223, 228},   {106, 135, 204},
    {116, 28, 41},   {240, 35, 235},  {0, 166, 156},   {249, 139, 0},
    {225, 228, 194}, {128, 64, 0},    {64, 128, 128},  {192, 192, 64},
}};

inline constexpr Rgb kUnlabeledColor = {128, 128, 128};

inline constexpr Rgb class_color(ClassIndex c) {
  return kClassPalette[c % kClassPalette.size()];
}

}  // namespace segfusion
