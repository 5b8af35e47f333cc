//! Measure-preserving maps of `([0,1), Lebesgue)` and exact orbit computation.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use rand::RngCore;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::fixed::Fixed;

/// Bits kept beyond the orbit depth so distances still see 64 sampled bits at
/// the last iterate.
pub const GUARD_BITS: u32 = 64;

/// Default precision for irrational rotation angles.
pub const ANGLE_BITS: u32 = 256;

/// A point `numerator / 2^precision_bits` of `[0, 1)`.
///
/// Expanding maps shift information out of the top of the numerator; the
/// point records how many bits have been consumed that way and refuses to
/// iterate once fewer than [`GUARD_BITS`] fresh bits would remain.
#[derive(Clone, Debug)]
pub struct ExactPoint {
    value: Fixed,
    spent_bits: u32,
}

impl PartialEq for ExactPoint {
    fn eq(&self, other: &Self) -> bool {
        self.value == other.value
    }
}

impl Eq for ExactPoint {}

impl ExactPoint {
    pub(crate) fn from_fixed(value: Fixed) -> Self {
        ExactPoint {
            value,
            spent_bits: 0,
        }
    }

    pub fn zero(precision_bits: u32) -> Self {
        ExactPoint::from_fixed(Fixed::zero(precision_bits))
    }

    /// `floor(num / den * 2^bits) / 2^bits`; exact whenever `den` is a power of two
    /// no larger than `2^bits`.
    pub fn from_ratio(num: u64, den: u64, precision_bits: u32) -> Result<Self> {
        if precision_bits == 0 {
            return Err(Error::invalid("precision must be positive"));
        }
        Fixed::from_ratio(num, den, precision_bits)
            .map(ExactPoint::from_fixed)
            .ok_or_else(|| Error::invalid(format!("{num}/{den} is not in [0, 1)")))
    }

    pub fn from_numerator(numerator: &BigUint, precision_bits: u32) -> Result<Self> {
        if precision_bits == 0 {
            return Err(Error::invalid("precision must be positive"));
        }
        Fixed::from_biguint(numerator, precision_bits)
            .map(ExactPoint::from_fixed)
            .ok_or_else(|| Error::invalid("numerator must be below 2^precision_bits"))
    }

    /// Exact binary value of `x`, truncated if `x` needs more than `precision_bits`.
    pub fn from_f64(x: f64, precision_bits: u32) -> Result<Self> {
        if !(0.0..1.0).contains(&x) {
            return Err(Error::invalid(format!("{x} is not in [0, 1)")));
        }
        if precision_bits == 0 {
            return Err(Error::invalid("precision must be positive"));
        }
        // x = mantissa * 2^exp with a 53-bit integer mantissa.
        let bits = x.to_bits();
        let raw_exp = ((bits >> 52) & 0x7ff) as i64;
        let frac = bits & ((1u64 << 52) - 1);
        let (mantissa, exp) = if raw_exp == 0 {
            (frac, -1074)
        } else {
            (frac | (1u64 << 52), raw_exp - 1075)
        };
        let shift = i64::from(precision_bits) + exp;
        let n = if shift >= 0 {
            BigUint::from(mantissa) << (shift as u64)
        } else {
            BigUint::from(mantissa) >> ((-shift) as u64)
        };
        ExactPoint::from_numerator(&n, precision_bits)
    }

    pub fn from_hex(hex: &str, precision_bits: u32) -> Result<Self> {
        let digits = hex.trim_start_matches("0x").trim_start_matches("0X");
        if precision_bits == 0 {
            return Err(Error::invalid("precision must be positive"));
        }
        Fixed::from_hex(digits, precision_bits)
            .map(ExactPoint::from_fixed)
            .ok_or_else(|| Error::parse(format!("bad fixed-point hex `{hex}` at {precision_bits} bits")))
    }

    /// Parses `0xHEX@BITS` (precision as written), `0xHEX`, `p/q` or a decimal
    /// such as `0.3` (the nearest double, taken exactly). Forms without an
    /// explicit precision use `precision_bits`.
    pub fn parse(text: &str, precision_bits: u32) -> Result<Self> {
        let t = text.trim();
        if t.starts_with("0x") || t.starts_with("0X") {
            return match t.split_once('@') {
                Some((hex, bits)) => {
                    let bits = bits
                        .parse()
                        .map_err(|_| Error::parse(format!("bad precision in point `{t}`")))?;
                    ExactPoint::from_hex(hex, bits)
                }
                None => ExactPoint::from_hex(t, precision_bits),
            };
        }
        if let Some((p, q)) = t.split_once('/') {
            let bad = || Error::parse(format!("bad ratio `{t}`"));
            let p = p.trim().parse().map_err(|_| bad())?;
            let q = q.trim().parse().map_err(|_| bad())?;
            return ExactPoint::from_ratio(p, q, precision_bits);
        }
        let x: f64 = t.parse().map_err(|_| Error::parse(format!("bad point `{t}`")))?;
        ExactPoint::from_f64(x, precision_bits)
    }

    pub fn numerator(&self) -> BigUint {
        self.value.to_biguint()
    }

    pub fn precision_bits(&self) -> u32 {
        self.value.bits()
    }

    /// Bits already shifted out by expanding iterations.
    pub fn spent_bits(&self) -> u32 {
        self.spent_bits
    }

    pub fn to_f64(&self) -> f64 {
        self.value.to_f64()
    }

    /// Numerator as zero-padded lowercase hex, one digit per four bits.
    pub fn to_hex(&self) -> String {
        self.value.to_hex()
    }

    pub(crate) fn fixed(&self) -> &Fixed {
        &self.value
    }

    /// Same value at a different precision; widening is exact.
    pub fn with_precision(&self, precision_bits: u32) -> ExactPoint {
        ExactPoint {
            value: self.value.with_bits(precision_bits),
            spent_bits: self.spent_bits,
        }
    }
}

impl fmt::Display for ExactPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}@{}", self.to_hex(), self.precision_bits())
    }
}

/// The four families of maps the laboratory ships.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MapKind {
    /// `x -> r x mod 1`.
    RAdic(u32),
    /// `x -> x + alpha mod 1`.
    Rotation(ExactPoint),
    /// `x -> 2x` on `[0, 1/2)`, `x -> 2 - 2x` on `[1/2, 1)`, with 1 wrapped to 0.
    Tent,
    Identity,
}

/// A measure-preserving, piecewise monotone map of `[0, 1)`.
#[derive(Clone, Debug)]
pub struct MapSpec {
    pub kind: MapKind,
    pub description: String,
}

impl PartialEq for MapSpec {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

impl Eq for MapSpec {}

fn isqrt_scaled(n: u64, bits: u32) -> BigUint {
    (BigUint::from(n) << (2 * u64::from(bits))).sqrt()
}

impl MapSpec {
    fn with_kind(kind: MapKind) -> MapSpec {
        let description = match &kind {
            MapKind::RAdic(2) => "doubling map x -> 2x mod 1".to_string(),
            MapKind::RAdic(r) => format!("{r}-adic map x -> {r}x mod 1"),
            MapKind::Rotation(a) => format!("rotation x -> x + {:.12} mod 1", a.to_f64()),
            MapKind::Tent => "tent map".to_string(),
            MapKind::Identity => "identity (non-ergodic control)".to_string(),
        };
        MapSpec { kind, description }
    }

    pub fn radic(r: u32) -> Result<MapSpec> {
        if r < 2 {
            return Err(Error::invalid(format!("r-adic map needs r >= 2, got {r}")));
        }
        Ok(MapSpec::with_kind(MapKind::RAdic(r)))
    }

    pub fn doubling() -> MapSpec {
        MapSpec::with_kind(MapKind::RAdic(2))
    }

    pub fn rotation(alpha: ExactPoint) -> MapSpec {
        MapSpec::with_kind(MapKind::Rotation(alpha.with_precision(alpha.precision_bits())))
    }

    /// Rotation by the golden-ratio conjugate `(sqrt 5 - 1) / 2`, truncated to `bits`.
    pub fn golden_rotation(bits: u32) -> MapSpec {
        let root = isqrt_scaled(5, bits);
        let num = (root - (BigUint::from(1u8) << bits)) >> 1u8;
        let alpha = ExactPoint::from_numerator(&num, bits).expect("golden angle is below 1");
        MapSpec::rotation(alpha)
    }

    /// Rotation by the fractional part of `sqrt(n)`, truncated to `bits`.
    pub fn sqrt_rotation(n: u64, bits: u32) -> Result<MapSpec> {
        let whole = (n as f64).sqrt().floor() as u64;
        let whole = (whole.saturating_sub(1)..=whole + 1)
            .filter(|w| w * w <= n)
            .max()
            .unwrap_or(0);
        if whole * whole == n {
            return Err(Error::invalid(format!("sqrt({n}) is rational")));
        }
        let num = isqrt_scaled(n, bits) - (BigUint::from(whole) << bits);
        let alpha = ExactPoint::from_numerator(&num, bits)?;
        Ok(MapSpec::rotation(alpha))
    }

    pub fn tent() -> MapSpec {
        MapSpec::with_kind(MapKind::Tent)
    }

    pub fn identity() -> MapSpec {
        MapSpec::with_kind(MapKind::Identity)
    }

    /// Bits of information one iteration shifts out of a point.
    pub fn bits_per_step(&self) -> u32 {
        match &self.kind {
            MapKind::RAdic(r) => 32 - (r - 1).leading_zeros(),
            MapKind::Tent => 1,
            MapKind::Rotation(_) | MapKind::Identity => 0,
        }
    }

    /// Precision a point needs for an exact orbit of the given length.
    pub fn required_precision(&self, horizon: usize) -> u32 {
        let depth = (horizon as u64) * u64::from(self.bits_per_step()) + u64::from(GUARD_BITS);
        let depth = u32::try_from(depth).unwrap_or(u32::MAX);
        match &self.kind {
            MapKind::Rotation(alpha) => depth.max(alpha.precision_bits()),
            _ => depth,
        }
    }

    pub fn is_expanding(&self) -> bool {
        self.bits_per_step() > 0
    }

    /// Centers where a universal "for every x" claim is most likely to fail:
    /// 0, 1/2, 1/3, 2/3 and the map's fixed points.
    pub fn adversarial_centers(&self, precision_bits: u32) -> Vec<ExactPoint> {
        let mut ratios: Vec<(u64, u64)> = vec![(0, 1), (1, 2), (1, 3), (2, 3)];
        match &self.kind {
            MapKind::RAdic(r) => {
                let r = u64::from(*r);
                ratios.extend((1..r - 1).map(|k| (k, r - 1)));
            }
            MapKind::Tent => ratios.push((2, 3)),
            MapKind::Rotation(_) | MapKind::Identity => {}
        }
        let mut out: Vec<ExactPoint> = Vec::new();
        for (n, d) in ratios {
            let p = ExactPoint::from_ratio(n, d, precision_bits).expect("ratio below 1");
            if !out.contains(&p) {
                out.push(p);
            }
        }
        out
    }
}

impl fmt::Display for MapSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            MapKind::RAdic(r) => write!(f, "radic:{r}"),
            MapKind::Rotation(a) => write!(f, "rotation:{a}"),
            MapKind::Tent => f.write_str("tent"),
            MapKind::Identity => f.write_str("identity"),
        }
    }
}

fn split_precision(text: &str) -> Result<(&str, Option<u32>)> {
    match text.rsplit_once('@') {
        Some((body, bits)) => {
            let bits = bits
                .trim()
                .parse::<u32>()
                .map_err(|_| Error::parse(format!("bad precision suffix in `{text}`")))?;
            if bits == 0 {
                return Err(Error::parse("precision suffix must be positive"));
            }
            Ok((body.trim(), Some(bits)))
        }
        None => Ok((text.trim(), None)),
    }
}

impl FromStr for MapSpec {
    type Err = Error;

    /// Accepts `radic:R`, `doubling`, `tent`, `identity`, `rotation:0xHEX@BITS`,
    /// and the shorthands `rotation:golden[@BITS]`, `rotation:sqrt(N)[@BITS]`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h.trim(), Some(a.trim())),
            None => (s, None),
        };
        match (head.to_ascii_lowercase().as_str(), arg) {
            ("radic", Some(r)) => {
                let r = r
                    .parse::<u32>()
                    .map_err(|_| Error::parse(format!("bad r-adic base `{r}`")))?;
                MapSpec::radic(r)
            }
            ("doubling", None) => Ok(MapSpec::doubling()),
            ("tent", None) => Ok(MapSpec::tent()),
            ("identity", None) => Ok(MapSpec::identity()),
            ("rotation", Some(angle)) => {
                let (body, bits) = split_precision(angle)?;
                let bits_or_default = bits.unwrap_or(ANGLE_BITS);
                if body.eq_ignore_ascii_case("golden") {
                    return Ok(MapSpec::golden_rotation(bits_or_default));
                }
                if let Some(n) = body
                    .strip_prefix("sqrt(")
                    .and_then(|rest| rest.strip_suffix(')'))
                {
                    let n = n
                        .trim()
                        .parse::<u64>()
                        .map_err(|_| Error::parse(format!("bad sqrt argument in `{s}`")))?;
                    return MapSpec::sqrt_rotation(n, bits_or_default);
                }
                if body.starts_with("0x") || body.starts_with("0X") {
                    let bits = bits.ok_or_else(|| {
                        Error::parse(format!("hex rotation angle `{s}` needs an @BITS suffix"))
                    })?;
                    return Ok(MapSpec::rotation(ExactPoint::from_hex(body, bits)?));
                }
                Err(Error::parse(format!("unrecognized rotation angle `{angle}`")))
            }
            _ => Err(Error::parse(format!("unrecognized map `{s}`"))),
        }
    }
}

impl Serialize for MapSpec {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MapSpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One application of the map. Exact; fails only when an expanding map would
/// eat into the guard bits.
pub fn iterate(map: &MapSpec, x: &ExactPoint) -> Result<ExactPoint> {
    let step = map.bits_per_step();
    if step > 0 {
        let needed = x.spent_bits + step + GUARD_BITS;
        if x.precision_bits() < needed {
            return Err(Error::PrecisionExhausted {
                needed,
                available: x.precision_bits(),
            });
        }
    }
    let value = match &map.kind {
        MapKind::RAdic(r) => x.value.mul_small_mod(u64::from(*r)),
        MapKind::Rotation(alpha) => {
            if alpha.precision_bits() == x.precision_bits() {
                x.value.add_mod(&alpha.value)
            } else {
                x.value.add_mod(&alpha.value.with_bits(x.precision_bits()))
            }
        }
        MapKind::Tent => {
            if x.value.top_bit() {
                x.value.neg_mod().mul_small_mod(2)
            } else {
                x.value.mul_small_mod(2)
            }
        }
        MapKind::Identity => x.value.clone(),
    };
    Ok(ExactPoint {
        value,
        spent_bits: x.spent_bits + step,
    })
}

/// `x, T x, ..., T^N x`.
#[derive(Clone, Debug)]
pub struct Orbit {
    pub points: Vec<ExactPoint>,
    pub map: MapSpec,
    pub horizon: usize,
}

pub fn orbit(map: &MapSpec, x: &ExactPoint, horizon: usize) -> Result<Orbit> {
    let needed = x.spent_bits.saturating_add(
        u32::try_from(horizon as u64 * u64::from(map.bits_per_step())).unwrap_or(u32::MAX),
    );
    if map.is_expanding() && x.precision_bits() < needed.saturating_add(GUARD_BITS) {
        return Err(Error::PrecisionExhausted {
            needed: needed.saturating_add(GUARD_BITS),
            available: x.precision_bits(),
        });
    }
    let mut points = Vec::with_capacity(horizon + 1);
    points.push(x.clone());
    for n in 0..horizon {
        let next = iterate(map, &points[n])?;
        points.push(next);
    }
    Ok(Orbit {
        points,
        map: map.clone(),
        horizon,
    })
}

/// Uniform point on the `2^precision_bits` grid. The stream's words fill the
/// expansion from the most significant bit down, so a wider draw from the same
/// stream extends a narrower one.
pub fn sample_point<R: RngCore + ?Sized>(rng: &mut R, precision_bits: u32) -> ExactPoint {
    assert!(precision_bits >= 64, "sampled points need at least 64 bits");
    let words: Vec<u64> = (0..precision_bits.div_ceil(64)).map(|_| rng.next_u64()).collect();
    ExactPoint::from_fixed(Fixed::from_top_words(&words, precision_bits))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn parses_point_text() {
        let third = ExactPoint::parse("1/3", 128).unwrap();
        assert_eq!(third, ExactPoint::from_ratio(1, 3, 128).unwrap());
        let half = ExactPoint::parse("0.5", 64).unwrap();
        assert_eq!(half.to_f64(), 0.5);
        let h = ExactPoint::parse("0x8@4", 999).unwrap();
        assert_eq!(h.precision_bits(), 4);
        assert_eq!(h.to_f64(), 0.5);
        assert!(ExactPoint::parse("nope", 64).is_err());
        assert!(ExactPoint::parse("1/0", 64).is_err());
    }

    fn pt(n: u64, d: u64) -> ExactPoint {
        ExactPoint::from_ratio(n, d, 128).unwrap()
    }

    #[test]
    fn doubling_quarter_goes_to_half() {
        let y = iterate(&MapSpec::doubling(), &pt(1, 4)).unwrap();
        assert_eq!(y, pt(1, 2));
    }

    #[test]
    fn triadic_half_is_fixed() {
        let m = MapSpec::radic(3).unwrap();
        assert_eq!(iterate(&m, &pt(1, 2)).unwrap(), pt(1, 2));
    }

    #[test]
    fn tent_branches() {
        let t = MapSpec::tent();
        assert_eq!(iterate(&t, &pt(1, 4)).unwrap(), pt(1, 2));
        assert_eq!(iterate(&t, &pt(3, 4)).unwrap(), pt(1, 2));
        assert_eq!(iterate(&t, &pt(1, 2)).unwrap(), pt(0, 1));
    }

    #[test]
    fn identity_orbit_repeats() {
        let x = pt(5, 7);
        let o = orbit(&MapSpec::identity(), &x, 10).unwrap();
        assert_eq!(o.points.len(), 11);
        assert!(o.points.iter().all(|p| *p == x));
    }

    #[test]
    fn doubling_third_has_period_two() {
        let x = ExactPoint::from_ratio(1, 3, 200).unwrap();
        let o = orbit(&MapSpec::doubling(), &x, 100).unwrap();
        for (n, p) in o.points.iter().enumerate() {
            let want = if n % 2 == 0 { 1.0 / 3.0 } else { 2.0 / 3.0 };
            assert!((p.to_f64() - want).abs() < 1e-15, "n={n} got {}", p.to_f64());
        }
    }

    #[test]
    fn rotation_orbit_adds_angle() {
        let m = MapSpec::golden_rotation(256);
        let MapKind::Rotation(alpha) = &m.kind else { unreachable!() };
        let x = ExactPoint::from_ratio(1, 10, 256).unwrap();
        let o = orbit(&m, &x, 5).unwrap();
        let mut want = x.fixed().clone();
        for p in &o.points {
            assert_eq!(p.fixed(), &want);
            want = want.add_mod(alpha.fixed());
        }
        let g = (5f64.sqrt() - 1.0) / 2.0;
        assert!((alpha.to_f64() - g).abs() < 1e-15);
    }

    #[test]
    fn precision_exhaustion_is_reported() {
        let x = ExactPoint::from_ratio(1, 3, 100).unwrap();
        let err = orbit(&MapSpec::doubling(), &x, 40).unwrap_err();
        assert!(matches!(err, Error::PrecisionExhausted { needed: 104, available: 100 }));
        let mut p = x;
        let d = MapSpec::doubling();
        for _ in 0..36 {
            p = iterate(&d, &p).unwrap();
        }
        assert!(matches!(iterate(&d, &p), Err(Error::PrecisionExhausted { .. })));
    }

    #[test]
    fn required_precision_matches_depth_rule() {
        assert_eq!(MapSpec::doubling().required_precision(100), 164);
        assert_eq!(MapSpec::radic(3).unwrap().required_precision(100), 264);
        assert_eq!(MapSpec::radic(5).unwrap().required_precision(10), 94);
        assert_eq!(MapSpec::golden_rotation(256).required_precision(1000), 256);
        assert_eq!(MapSpec::identity().required_precision(1000), 64);
    }

    #[test]
    fn text_forms_round_trip() {
        for text in ["radic:2", "radic:5", "tent", "identity"] {
            let m: MapSpec = text.parse().unwrap();
            assert_eq!(m.to_string(), text);
        }
        let g: MapSpec = "rotation:golden".parse().unwrap();
        let canonical = g.to_string();
        assert!(canonical.starts_with("rotation:0x9e3779b97f4a7c15"));
        assert!(canonical.ends_with("@256"));
        assert_eq!(canonical.parse::<MapSpec>().unwrap(), g);
        assert_eq!("doubling".parse::<MapSpec>().unwrap(), MapSpec::doubling());
        assert!("radic:1".parse::<MapSpec>().is_err());
        assert!("rotation:0x12".parse::<MapSpec>().is_err());
        assert!("rotation:sqrt(4)".parse::<MapSpec>().is_err());
        assert!("baker".parse::<MapSpec>().is_err());
    }

    #[test]
    fn sqrt_angles_are_fractional_parts() {
        for n in [2u64, 3, 7, 10] {
            let m = MapSpec::sqrt_rotation(n, 256).unwrap();
            let MapKind::Rotation(a) = &m.kind else { unreachable!() };
            let s = (n as f64).sqrt();
            assert!((a.to_f64() - (s - s.floor())).abs() < 1e-14);
        }
    }

    #[test]
    fn from_f64_is_exact_for_binary_values() {
        let p = ExactPoint::from_f64(0.1, 128).unwrap();
        assert_eq!(p.to_f64(), 0.1);
        assert!(ExactPoint::from_f64(1.0, 64).is_err());
    }

    #[test]
    fn sampling_is_deterministic_and_nested() {
        let mut a = ChaCha8Rng::seed_from_u64(9);
        let mut b = ChaCha8Rng::seed_from_u64(9);
        let narrow = sample_point(&mut a, 128);
        let wide = sample_point(&mut b, 200);
        assert_eq!(wide.with_precision(128), narrow);
        let mut c = ChaCha8Rng::seed_from_u64(9);
        assert_eq!(sample_point(&mut c, 128), narrow);
    }

    #[test]
    fn adversarial_centers_include_fixed_points() {
        let c = MapSpec::radic(3).unwrap().adversarial_centers(128);
        assert!(c.contains(&pt(1, 2)));
        assert!(c.contains(&pt(0, 1)));
        let c = MapSpec::tent().adversarial_centers(128);
        assert_eq!(c.len(), 4);
    }
}
