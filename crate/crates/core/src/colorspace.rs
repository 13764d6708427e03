//! sRGB to CIELAB conversion and the CIEDE2000 color difference.
//!
//! Conversions assume the sRGB working space with the D65 white point and
//! the 2° standard observer. The white point is the row sum of the
//! RGB→XYZ matrix, so RGB(255,255,255) lands exactly on L=100, a=b=0.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{Error, Result};

/// An sRGB color with channels in `[0, 255]`. Fractional channels are allowed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RgbColor {
    r: f64,
    g: f64,
    b: f64,
}

impl RgbColor {
    pub fn new(r: f64, g: f64, b: f64) -> Result<Self> {
        for (name, v) in [("r", r), ("g", g), ("b", b)] {
            if !v.is_finite() || !(0.0..=255.0).contains(&v) {
                return Err(Error::InputDomain(format!(
                    "channel {name} = {v} outside [0, 255]"
                )));
            }
        }
        Ok(Self { r, g, b })
    }

    pub const fn from_rgb8(px: [u8; 3]) -> Self {
        Self {
            r: px[0] as f64,
            g: px[1] as f64,
            b: px[2] as f64,
        }
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn g(&self) -> f64 {
        self.g
    }

    pub fn b(&self) -> f64 {
        self.b
    }
}

/// Background shade of slide glass outside the tissue.
pub const REFERENCE_WHITE: RgbColor = RgbColor {
    r: 238.0,
    g: 238.0,
    b: 238.0,
};

/// Mean color of PD-L1 (DAB) stained pixels.
pub const BASE_BROWN: RgbColor = RgbColor {
    r: 117.3,
    g: 88.9,
    b: 67.3,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabColor {
    pub l: f64,
    pub a: f64,
    pub b: f64,
}

impl LabColor {
    pub const fn new(l: f64, a: f64, b: f64) -> Self {
        Self { l, a, b }
    }

    pub fn is_finite(&self) -> bool {
        self.l.is_finite() && self.a.is_finite() && self.b.is_finite()
    }

    /// Lab image of an 8-bit pixel, using a cached linearisation table.
    pub fn from_rgb8(px: [u8; 3]) -> Self {
        let lut = linear_lut();
        xyz_to_lab(
            lut[px[0] as usize],
            lut[px[1] as usize],
            lut[px[2] as usize],
        )
    }
}

const SRGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];

const WHITE_X: f64 = 0.4124564 + 0.3575761 + 0.1804375;
const WHITE_Y: f64 = 0.2126729 + 0.7151522 + 0.0721750;
const WHITE_Z: f64 = 0.0193339 + 0.1191920 + 0.9503041;

// CIE constants in exact rational form.
const LAB_EPSILON: f64 = 216.0 / 24389.0;
const LAB_KAPPA: f64 = 24389.0 / 27.0;

fn srgb_channel_to_linear(c: f64) -> f64 {
    let c = c / 255.0;
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn linear_lut() -> &'static [f64; 256] {
    static LUT: OnceLock<[f64; 256]> = OnceLock::new();
    LUT.get_or_init(|| {
        let mut lut = [0.0; 256];
        for (i, v) in lut.iter_mut().enumerate() {
            *v = srgb_channel_to_linear(i as f64);
        }
        lut
    })
}

fn lab_f(t: f64) -> f64 {
    if t > LAB_EPSILON {
        t.cbrt()
    } else {
        (LAB_KAPPA * t + 16.0) / 116.0
    }
}

fn xyz_to_lab(r: f64, g: f64, b: f64) -> LabColor {
    let m = &SRGB_TO_XYZ;
    let x = m[0][0] * r + m[0][1] * g + m[0][2] * b;
    let y = m[1][0] * r + m[1][1] * g + m[1][2] * b;
    let z = m[2][0] * r + m[2][1] * g + m[2][2] * b;
    let fx = lab_f(x / WHITE_X);
    let fy = lab_f(y / WHITE_Y);
    let fz = lab_f(z / WHITE_Z);
    LabColor {
        l: 116.0 * fy - 16.0,
        a: 500.0 * (fx - fy),
        b: 200.0 * (fy - fz),
    }
}

pub fn srgb_to_lab(c: RgbColor) -> LabColor {
    xyz_to_lab(
        srgb_channel_to_linear(c.r),
        srgb_channel_to_linear(c.g),
        srgb_channel_to_linear(c.b),
    )
}

fn hue_degrees(b: f64, a: f64) -> f64 {
    if a == 0.0 && b == 0.0 {
        return 0.0;
    }
    let h = b.atan2(a).to_degrees();
    if h < 0.0 {
        h + 360.0
    } else {
        h
    }
}

const POW25_7: f64 = 6_103_515_625.0;

/// CIEDE2000 color difference with unit parametric weights (kL = kC = kH = 1).
///
/// Hue differences and hue means follow the published reference procedure,
/// including the zero-chroma special cases; the result is exactly symmetric
/// in its arguments.
pub fn ciede2000(x: LabColor, y: LabColor) -> f64 {
    let c1 = x.a.hypot(x.b);
    let c2 = y.a.hypot(y.b);
    let c_bar = (c1 + c2) / 2.0;
    let c_bar7 = c_bar.powi(7);
    let g = 0.5 * (1.0 - (c_bar7 / (c_bar7 + POW25_7)).sqrt());

    let a1p = (1.0 + g) * x.a;
    let a2p = (1.0 + g) * y.a;
    let c1p = a1p.hypot(x.b);
    let c2p = a2p.hypot(y.b);
    let h1p = hue_degrees(x.b, a1p);
    let h2p = hue_degrees(y.b, a2p);

    let dl = y.l - x.l;
    let dc = c2p - c1p;
    let chroma_product = c1p * c2p;

    let dh = if chroma_product == 0.0 {
        0.0
    } else {
        let d = h2p - h1p;
        if d > 180.0 {
            d - 360.0
        } else if d < -180.0 {
            d + 360.0
        } else {
            d
        }
    };
    let big_dh = 2.0 * chroma_product.sqrt() * (dh.to_radians() / 2.0).sin();

    let l_bar = (x.l + y.l) / 2.0;
    let cp_bar = (c1p + c2p) / 2.0;
    let h_sum = h1p + h2p;
    let hp_bar = if chroma_product == 0.0 {
        h_sum
    } else if (h1p - h2p).abs() <= 180.0 {
        h_sum / 2.0
    } else if h_sum < 360.0 {
        (h_sum + 360.0) / 2.0
    } else {
        (h_sum - 360.0) / 2.0
    };

    let t = 1.0 - 0.17 * (hp_bar - 30.0).to_radians().cos()
        + 0.24 * (2.0 * hp_bar).to_radians().cos()
        + 0.32 * (3.0 * hp_bar + 6.0).to_radians().cos()
        - 0.20 * (4.0 * hp_bar - 63.0).to_radians().cos();

    let l50 = (l_bar - 50.0) * (l_bar - 50.0);
    let s_l = 1.0 + 0.015 * l50 / (20.0 + l50).sqrt();
    let s_c = 1.0 + 0.045 * cp_bar;
    let s_h = 1.0 + 0.015 * cp_bar * t;

    let d_theta = 30.0 * (-((hp_bar - 275.0) / 25.0).powi(2)).exp();
    let cp_bar7 = cp_bar.powi(7);
    let r_c = 2.0 * (cp_bar7 / (cp_bar7 + POW25_7)).sqrt();
    let r_t = -(2.0 * d_theta * PI / 180.0).sin() * r_c;

    let tl = dl / s_l;
    let tc = dc / s_c;
    let th = big_dh / s_h;
    // Rounding can leave a tiny negative radicand for near-identical colors.
    (tl * tl + tc * tc + th * th + r_t * tc * th).max(0.0).sqrt()
}

/// Precomputed Lab image of a reference color for repeated distance queries.
#[derive(Debug, Clone, Copy)]
pub struct ColorReference {
    lab: LabColor,
}

impl ColorReference {
    pub fn new(c: RgbColor) -> Self {
        Self {
            lab: srgb_to_lab(c),
        }
    }

    pub fn white() -> Self {
        static W: OnceLock<ColorReference> = OnceLock::new();
        *W.get_or_init(|| ColorReference::new(REFERENCE_WHITE))
    }

    pub fn brown() -> Self {
        static B: OnceLock<ColorReference> = OnceLock::new();
        *B.get_or_init(|| ColorReference::new(BASE_BROWN))
    }

    pub fn lab(&self) -> LabColor {
        self.lab
    }

    pub fn distance(&self, c: RgbColor) -> f64 {
        ciede2000(srgb_to_lab(c), self.lab)
    }

    pub fn distance_rgb8(&self, px: [u8; 3]) -> f64 {
        ciede2000(LabColor::from_rgb8(px), self.lab)
    }
}

/// ΔE00 between `c` and the slide background white RGB(238,238,238).
pub fn distance_to_white(c: RgbColor) -> f64 {
    ColorReference::white().distance(c)
}

/// ΔE00 between `c` and the stain reference color.
pub fn distance_to_brown(c: RgbColor) -> f64 {
    ColorReference::brown().distance(c)
}
