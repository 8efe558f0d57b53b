#pragma once

#include <array>
#include <concepts>
#include <optional>
#include <string>

#include "hypexp/rng.hpp"
#include "hypexp/splitting.hpp"

namespace hypexp {

/// Local chart ψ: box of half-width γ in R^d → manifold, with coordinates
/// aligned to the invariant frame (ψ(0) = q0, Dψ(0) = frame basis).
template <class K>
concept LocalChart = requires(const K& k, const typename K::Point& p, const Coords<typename K::dims>& c) {
  typename K::Point;
  typename K::dims;
  { k.gamma() } -> std::convertible_to<double>;
  { k.to_chart(p) } -> std::same_as<std::optional<Coords<typename K::dims>>>;
  { k.from_chart(c) } -> std::same_as<typename K::Point>;
  // Jψ(c): chart tangent vectors → frame coordinates at ψ(c).
  { k.jacobian(c) } -> std::same_as<FrameMatrix<typename K::dims>>;
};

/// Invertible map with a one-step derivative in the adapted frame.
template <class S>
concept DynamicalMap = requires(const S& s, const typename S::Point& p) {
  typename S::Point;
  typename S::dims;
  { s.apply(p) } -> std::same_as<typename S::Point>;
  { s.inverse(p) } -> std::same_as<typename S::Point>;
  { s.frame_differential(p) } -> std::same_as<FrameMatrix<typename S::dims>>;
};

template <class S>
concept PartiallyHyperbolicSystem =
    DynamicalMap<S> && requires(const S& s, const typename S::Point& p, TaskRng& rng, double x) {
      { s.rates() } -> std::same_as<SplittingSpec>;
      { s.volume_preserving() } -> std::convertible_to<bool>;
      { s.name() } -> std::convertible_to<std::string>;
      { s.coordinates(p) } -> std::same_as<std::array<double, 3>>;
      { s.sample_uniform(rng) } -> std::same_as<typename S::Point>;
      { s.unstable_leaf_point(p, x) } -> std::same_as<typename S::Point>;
      { s.distance(p, p) } -> std::convertible_to<double>;
    };

}  // namespace hypexp
