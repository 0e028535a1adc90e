pub mod cues;
pub mod executive;
pub mod geometry;
pub mod label;
pub mod planner;
pub mod scene_graph;
pub mod sim;

pub use label::normalize_label;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    struct Introduction;
    #[doc = include_str!("../../../book/src/scene-graph.md")]
    struct SceneGraph;
    #[doc = include_str!("../../../book/src/geometry.md")]
    struct Geometry;
    #[doc = include_str!("../../../book/src/cues.md")]
    struct Cues;
    #[doc = include_str!("../../../book/src/planning.md")]
    struct Planning;
    #[doc = include_str!("../../../book/src/executive.md")]
    struct Executive;
    #[doc = include_str!("../../../book/src/operating.md")]
    struct Operating;
}
