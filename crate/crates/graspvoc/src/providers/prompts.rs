//! Prompt construction for the vision and language calls. The texts are
//! byte-stable and covered by golden-file tests.

use super::ProviderError;

/// Prompt asking the vision model for candidate subpart labels of an object.
pub fn build_candidate_prompt(object_label: &str) -> Result<String, ProviderError> {
    if object_label.trim().is_empty() {
        return Err(ProviderError::InvalidRequest(
            "object label must be non-empty".into(),
        ));
    }
    Ok(format!(
        "You are labeling the parts of an object so a robot can grasp and use it.\n\
         \n\
         Object: {object_label}\n\
         \n\
         The attached image is an orthographic depth rendering of the object's \
         point cloud. List the subparts of this object that are graspable or \
         task-relevant. Use short lowercase noun phrases and name each subpart \
         once.\n\
         \n\
         Respond with JSON only, in exactly this schema:\n\
         {{\"labels\": [str,...]}}\n"
    ))
}

/// Prompt asking the language model for the grasp and task subpart labels.
/// Duplicate labels are listed once, first occurrence order.
pub fn build_conditioning_prompt(task: &str, labels: &[String]) -> Result<String, ProviderError> {
    if task.trim().is_empty() {
        return Err(ProviderError::InvalidRequest("task must be non-empty".into()));
    }
    let mut unique: Vec<&str> = Vec::new();
    for label in labels {
        if !unique.contains(&label.as_str()) {
            unique.push(label);
        }
    }
    if unique.is_empty() {
        return Err(ProviderError::InvalidRequest(
            "at least one subpart label is required".into(),
        ));
    }
    let listing: String = unique.iter().map(|l| format!("- {l}\n")).collect();
    Ok(format!(
        "You are choosing which subpart of an object a robot should grasp in \
         order to perform a task.\n\
         \n\
         Task: {task}\n\
         Subpart labels:\n\
         {listing}\
         \n\
         Choose grasp_label, the subpart best suited for grasping, and \
         task_label, the subpart responsible for performing the task. Both \
         values must be copied verbatim from the subpart labels above.\n\
         \n\
         Respond with JSON only, in exactly this schema:\n\
         {{\"grasp_label\": str, \"task_label\": str}}\n"
    ))
}

/// Prompt asking the vision model to assign a candidate label (or
/// `background`) to every mask id.
pub fn build_assignment_prompt(
    mask_ids: &[u32],
    candidate_labels: &[String],
) -> Result<String, ProviderError> {
    if mask_ids.is_empty() {
        return Err(ProviderError::InvalidRequest("no masks to label".into()));
    }
    if candidate_labels.is_empty() {
        return Err(ProviderError::InvalidRequest(
            "no candidate labels given".into(),
        ));
    }
    let ids: Vec<String> = mask_ids.iter().map(|id| id.to_string()).collect();
    let listing: String = candidate_labels.iter().map(|l| format!("- {l}\n")).collect();
    Ok(format!(
        "The attached image is an orthographic depth rendering of an object. \
         Each of the following mask ids outlines one segmented region of the \
         image: {ids}.\n\
         \n\
         Candidate labels:\n\
         {listing}\
         \n\
         Assign the best-fitting candidate label to every mask id. Use \
         \"background\" for regions that match no candidate label.\n\
         \n\
         Respond with JSON only, in exactly this schema:\n\
         {{\"assignments\": {{\"<mask id>\": str, ...}}}}\n",
        ids = ids.join(", "),
    ))
}
