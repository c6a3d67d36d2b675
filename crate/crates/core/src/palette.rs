//! Fixed color table of the semantic map.

use std::collections::HashMap;
use std::sync::OnceLock;

pub type Rgb = [u8; 3];

/// Object categories dropped before rasterization.
pub const EXCLUDED_CATEGORIES: [&str; 7] =
    ["misc", "ceiling", "curtain", "objects", "floor", "wall", "void"];

pub const POINT: Rgb = [255, 255, 102];
pub const START: Rgb = [255, 255, 0];
pub const END: Rgb = [255, 255, 204];
pub const LINE: Rgb = [255, 255, 255];
pub const NONNAVIGABLE: Rgb = [0, 0, 0];
pub const NAVIGABLE: Rgb = [150, 0, 0];

const ENTRIES: [(Rgb, &str); 46] = [
    ([31, 119, 180], "void"),
    ([174, 199, 232], "wall"),
    ([255, 127, 14], "floor"),
    ([255, 187, 120], "chair"),
    ([44, 160, 44], "door"),
    ([152, 223, 138], "table"),
    ([214, 39, 40], "picture"),
    ([255, 152, 150], "cabinet"),
    ([148, 103, 189], "cushion"),
    ([197, 176, 213], "window"),
    ([140, 86, 75], "sofa"),
    ([196, 156, 148], "bed"),
    ([227, 119, 194], "curtain"),
    ([247, 182, 210], "chest_of_drawers"),
    ([127, 127, 127], "plant"),
    ([199, 199, 199], "sink"),
    ([188, 189, 34], "stairs"),
    ([219, 219, 141], "ceiling"),
    ([23, 190, 207], "toilet"),
    ([158, 218, 229], "stool"),
    ([57, 59, 121], "towel"),
    ([82, 84, 163], "mirror"),
    ([107, 110, 207], "tv_monitor"),
    ([156, 158, 222], "shower"),
    ([99, 121, 57], "column"),
    ([140, 162, 82], "bathtub"),
    ([181, 207, 107], "counter"),
    ([206, 219, 156], "fireplace"),
    ([140, 109, 49], "lighting"),
    ([189, 158, 57], "beam"),
    ([231, 186, 82], "railing"),
    ([231, 203, 148], "shelving"),
    ([132, 60, 57], "blinds"),
    ([173, 73, 74], "gym_equipment"),
    ([214, 97, 107], "seating"),
    ([231, 150, 156], "board_panel"),
    ([123, 65, 115], "furniture"),
    ([165, 81, 148], "appliances"),
    ([206, 109, 189], "clothes"),
    ([222, 158, 214], "objects"),
    (POINT, "[POINT]"),
    (START, "[START]"),
    (END, "[END]"),
    (LINE, "[LINE]"),
    (NONNAVIGABLE, "[NONNAVIGABLE]"),
    (NAVIGABLE, "[NAVIGABLE]"),
];

const NUM_CATEGORIES: usize = 40;

pub fn is_excluded_category(category: &str) -> bool {
    EXCLUDED_CATEGORIES.contains(&category)
}

/// Bijective name ↔ color table. Obtain the shared instance with
/// [`Palette::standard`].
#[derive(Debug)]
pub struct Palette {
    by_name: HashMap<&'static str, Rgb>,
    by_color: HashMap<Rgb, &'static str>,
}

impl Palette {
    pub fn standard() -> &'static Palette {
        static PALETTE: OnceLock<Palette> = OnceLock::new();
        PALETTE.get_or_init(|| {
            let by_name: HashMap<_, _> = ENTRIES.iter().map(|&(c, n)| (n, c)).collect();
            let by_color: HashMap<_, _> = ENTRIES.iter().map(|&(c, n)| (c, n)).collect();
            assert_eq!(by_name.len(), ENTRIES.len());
            assert_eq!(by_color.len(), ENTRIES.len(), "palette colors must be unique");
            Palette { by_name, by_color }
        })
    }

    pub fn color(&self, name: &str) -> Option<Rgb> {
        self.by_name.get(name).copied()
    }

    pub fn name(&self, color: Rgb) -> Option<&'static str> {
        self.by_color.get(&color).copied()
    }

    pub fn contains(&self, color: Rgb) -> bool {
        self.by_color.contains_key(&color)
    }

    /// The 40 simulator object categories, in table order.
    pub fn categories(&self) -> impl Iterator<Item = &'static str> {
        ENTRIES[..NUM_CATEGORIES].iter().map(|&(_, n)| n)
    }

    /// Categories that survive the exclusion list.
    pub fn drawable_categories(&self) -> impl Iterator<Item = &'static str> {
        self.categories().filter(|c| !is_excluded_category(c))
    }

    pub fn entries(&self) -> impl Iterator<Item = (&'static str, Rgb)> {
        ENTRIES.iter().map(|&(c, n)| (n, c))
    }

    pub fn len(&self) -> usize {
        ENTRIES.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bijective_with_markers() {
        let p = Palette::standard();
        assert_eq!(p.len(), 46);
        assert_eq!(p.categories().count(), 40);
        for (name, color) in p.entries() {
            assert_eq!(p.name(color), Some(name));
            assert_eq!(p.color(name), Some(color));
        }
        assert_eq!(p.color("chair"), Some([255, 187, 120]));
        assert_eq!(p.color("[START]"), Some([255, 255, 0]));
        assert_eq!(p.color("[NAVIGABLE]"), Some([150, 0, 0]));
    }

    #[test]
    fn drawable_categories_skip_exclusions() {
        let p = Palette::standard();
        let drawable: Vec<_> = p.drawable_categories().collect();
        assert_eq!(drawable.len(), 34);
        assert!(!drawable.contains(&"curtain"));
        assert!(drawable.contains(&"sofa"));
    }
}
