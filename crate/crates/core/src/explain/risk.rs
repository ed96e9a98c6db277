use crate::error::{Error, Result};

/// `(ao/(ao+ai)) / (bo/(bo+bi))`.
///
/// `ao = 0` gives 0. A zero denominator term with `ao > 0` gives +∞.
pub fn risk_ratio(ao: f64, ai: f64, bo: f64, bi: f64) -> Result<f64> {
    if [ao, ai, bo, bi].iter().any(|&c| !(c >= 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "risk ratio counts must be nonnegative, got ({ao}, {ai}, {bo}, {bi})"
        )));
    }
    Ok(risk_ratio_unchecked(ao, ai, bo, bi))
}

pub(crate) fn risk_ratio_unchecked(ao: f64, ai: f64, bo: f64, bi: f64) -> f64 {
    if ao <= 0.0 {
        return 0.0;
    }
    if bo <= 0.0 {
        return f64::INFINITY;
    }
    (ao / (ao + ai)) / (bo / (bo + bi))
}

/// Standard normal quantile by Wichura's AS241 (PPND16), accurate to about
/// 1e-16 relative in double precision.
pub fn normal_quantile(p: f64) -> f64 {
    const A: [f64; 8] = [
        3.387_132_872_796_366_6,
        1.331_416_678_917_843_8e2,
        1.971_590_950_306_551_3e3,
        1.373_169_376_550_946e4,
        4.592_195_393_154_987e4,
        6.726_577_092_700_87e4,
        3.343_057_558_358_813e4,
        2.509_080_928_730_122_7e3,
    ];
    const B: [f64; 8] = [
        1.0,
        4.231_333_070_160_091e1,
        6.871_870_074_920_579e2,
        5.394_196_021_424_751e3,
        2.121_379_430_158_659_7e4,
        3.930_789_580_009_271e4,
        2.872_908_573_572_194_3e4,
        5.226_495_278_852_545e3,
    ];
    const C: [f64; 8] = [
        1.423_437_110_749_683_5,
        4.630_337_846_156_545,
        5.769_497_221_460_691,
        3.647_848_324_763_204_5,
        1.270_458_252_452_368_4,
        2.417_807_251_774_506e-1,
        2.272_384_498_926_918_4e-2,
        7.745_450_142_783_414e-4,
    ];
    const D: [f64; 8] = [
        1.0,
        2.053_191_626_637_759,
        1.676_384_830_183_803_8,
        6.897_673_349_851e-1,
        1.481_039_764_274_800_8e-1,
        1.519_866_656_361_645_7e-2,
        5.475_938_084_995_345e-4,
        1.050_750_071_644_416_8e-9,
    ];
    const E: [f64; 8] = [
        6.657_904_643_501_103,
        5.463_784_911_164_114,
        1.784_826_539_917_291_3,
        2.965_605_718_285_049e-1,
        2.653_218_952_657_612_4e-2,
        1.242_660_947_388_078_4e-3,
        2.711_555_568_743_487_6e-5,
        2.010_334_399_292_288_1e-7,
    ];
    const F: [f64; 8] = [
        1.0,
        5.998_322_065_558_879e-1,
        1.369_298_809_227_358e-1,
        1.487_536_129_085_061_5e-2,
        7.868_691_311_456_133e-4,
        1.846_318_317_510_054_8e-5,
        1.421_511_758_316_446e-7,
        2.044_263_103_389_939_7e-15,
    ];
    fn poly(c: &[f64; 8], x: f64) -> f64 {
        c.iter().rev().fold(0.0, |acc, &k| acc * x + k)
    }

    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let r = (-r.ln()).sqrt();
    let x = if r <= 5.0 {
        let r = r - 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        let r = r - 5.0;
        poly(&E, r) / poly(&F, r)
    };
    if q < 0.0 {
        -x
    } else {
        x
    }
}

/// Two-sided critical value at significance `p` with Bonferroni correction
/// over `k` tests: the `1 - p/(2k)` normal quantile.
pub fn critical_z(p: f64, k: u64) -> f64 {
    normal_quantile(1.0 - p / (2.0 * k.max(1) as f64))
}

/// Log-normal interval around the risk ratio. `None` when any count is zero.
pub fn confidence_interval(ao: f64, ai: f64, bo: f64, bi: f64, p: f64, k: u64) -> Option<(f64, f64)> {
    if !(ao > 0.0 && ai > 0.0 && bo > 0.0 && bi > 0.0) {
        return None;
    }
    let rr = risk_ratio_unchecked(ao, ai, bo, bi);
    let se = (1.0 / ao - 1.0 / (ao + ai) + 1.0 / bo - 1.0 / (bo + bi)).sqrt();
    let spread = (critical_z(p, k) * se).exp();
    Some((rr / spread, rr * spread))
}
